#include <CLI11.hpp>
#include <cstdio>

int main(int argc, char** argv) {
    CLI::App app{"pdvol"};
    CLI11_PARSE(app, argc, argv);
    std::puts("stub");
    return 0;
}
