#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pdvol {

/// Calendar date carried alongside series data. All numerics run on
/// day-index grids with dt = 1/365; dates are bookkeeping only.
struct Date {
    int year = 1970;
    int month = 1;
    int day = 1;

    // days since 1970-01-01 (proleptic Gregorian)
    std::int64_t serial() const {
        std::int64_t y = year;
        const int m = month;
        y -= m <= 2;
        const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
        const unsigned yoe = static_cast<unsigned>(y - era * 400);
        const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + day - 1;
        const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
    }

    Date plus_days(std::int64_t n) const { return from_serial(serial() + n); }

    static Date from_serial(std::int64_t z) {
        z += 719468;
        const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
        const unsigned doe = static_cast<unsigned>(z - era * 146097);
        const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
        const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
        const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        const unsigned mp = (5 * doy + 2) / 153;
        const unsigned d = doy - (153 * mp + 2) / 5 + 1;
        const unsigned m = mp + (mp < 10 ? 3 : -9);
        return Date{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
    }

    static Date parse(const std::string& iso) {
        int y = 0, m = 0, d = 0;
        char dash1 = 0, dash2 = 0;
        std::istringstream in(iso);
        in >> y >> dash1 >> m >> dash2 >> d;
        if (in.fail() || dash1 != '-' || dash2 != '-' || m < 1 || m > 12 || d < 1 || d > 31) {
            throw std::invalid_argument("bad ISO-8601 date: '" + iso + "'");
        }
        return Date{y, m, d};
    }

    std::string to_string() const {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
        return buf;
    }

    friend bool operator==(const Date& a, const Date& b) {
        return a.year == b.year && a.month == b.month && a.day == b.day;
    }
};

enum class DailyKind { price, log_price, storage_daily };
enum class WeeklyKind { raw, normalized, periodic, residual };

struct DailySeries {
    Date start_date;
    std::vector<double> values;  // one per day
    DailyKind kind = DailyKind::price;

    std::size_t size() const { return values.size(); }

    void validate() const {
        if (values.empty()) {
            throw std::invalid_argument("DailySeries: empty value list");
        }
        if (kind == DailyKind::price) {
            for (std::size_t i = 0; i < values.size(); ++i) {
                if (!(values[i] > 0.0)) {
                    throw std::invalid_argument("DailySeries: price <= 0 at row " + std::to_string(i));
                }
            }
        }
    }
};

struct WeeklySeries {
    Date start_date;
    std::vector<double> values;  // one per week
    WeeklyKind kind = WeeklyKind::raw;

    std::size_t size() const { return values.size(); }

    void validate() const {
        if (values.empty()) {
            throw std::invalid_argument("WeeklySeries: empty value list");
        }
        if (kind == WeeklyKind::normalized) {
            for (std::size_t i = 0; i < values.size(); ++i) {
                if (!(values[i] > 0.0 && values[i] <= 1.0)) {
                    throw std::invalid_argument("WeeklySeries: normalized value outside (0,1] at row " +
                                                std::to_string(i));
                }
            }
        }
    }
};

enum class CsvSchema { daily_price, daily_log_price, daily_storage, weekly_raw, weekly_normalized };

namespace detail {

struct CsvRow {
    Date date;
    double value;
};

/// Two-column `date,value` CSV with a mandatory header row. Rows must be in
/// strictly increasing date order; the expected spacing (1 or 7 days) is
/// checked by the caller.
inline std::vector<CsvRow> read_csv_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open file: " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error(path + ": empty file");
    }
    std::vector<CsvRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed row (no comma)");
        }
        CsvRow row;
        try {
            row.date = Date::parse(line.substr(0, comma));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        const std::string value_text = line.substr(comma + 1);
        std::size_t consumed = 0;
        try {
            row.value = std::stod(value_text, &consumed);
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed value '" +
                                     value_text + "'");
        }
        while (consumed < value_text.size() &&
               (value_text[consumed] == ' ' || value_text[consumed] == '\t')) {
            ++consumed;
        }
        if (consumed != value_text.size()) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed value '" +
                                     value_text + "'");
        }
        if (!rows.empty() && row.date.serial() <= rows.back().date.serial()) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": non-monotone dates");
        }
        rows.push_back(row);
    }
    if (rows.empty()) {
        throw std::runtime_error(path + ": no data rows");
    }
    return rows;
}

inline void check_spacing(const std::vector<CsvRow>& rows, std::int64_t step, const std::string& path) {
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].date.serial() - rows[i - 1].date.serial() != step) {
            throw std::runtime_error(path + ": grid spacing is not exactly " + std::to_string(step) +
                                     " day(s) at row " + std::to_string(i + 1));
        }
    }
}

}  // namespace detail

inline DailySeries load_daily_csv(const std::string& path, DailyKind kind) {
    const auto rows = detail::read_csv_rows(path);
    detail::check_spacing(rows, 1, path);
    DailySeries out;
    out.start_date = rows.front().date;
    out.kind = kind;
    out.values.reserve(rows.size());
    for (const auto& r : rows) {
        out.values.push_back(r.value);
    }
    out.validate();
    return out;
}

inline WeeklySeries load_weekly_csv(const std::string& path, WeeklyKind kind) {
    const auto rows = detail::read_csv_rows(path);
    detail::check_spacing(rows, 7, path);
    WeeklySeries out;
    out.start_date = rows.front().date;
    out.kind = kind;
    out.values.reserve(rows.size());
    for (const auto& r : rows) {
        out.values.push_back(r.value);
    }
    out.validate();
    return out;
}

template <typename Series>
void save_csv(const Series& series, const std::string& path, std::int64_t day_step) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write file: " + path);
    }
    out << "date,value\n";
    out.precision(17);
    for (std::size_t i = 0; i < series.values.size(); ++i) {
        out << series.start_date.plus_days(static_cast<std::int64_t>(i) * day_step).to_string() << ','
            << series.values[i] << '\n';
    }
}

inline void save_csv(const DailySeries& s, const std::string& path) { save_csv(s, path, 1); }
inline void save_csv(const WeeklySeries& s, const std::string& path) { save_csv(s, path, 7); }

}  // namespace pdvol
