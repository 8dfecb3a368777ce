#include "zsl/date.hpp"

#include "zsl/error.hpp"

#include <charconv>
#include <cstdio>

namespace zsl {

namespace {

int parse_int(std::string_view s) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        return -1;
    }
    return v;
}

} // namespace

Date parse_date(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
        throw DataError("invalid date '" + std::string(text) + "', expected YYYY-MM-DD");
    }
    const int y = parse_int(text.substr(0, 4));
    const int m = parse_int(text.substr(5, 2));
    const int d = parse_int(text.substr(8, 2));
    Date out{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
             std::chrono::day{static_cast<unsigned>(d)}};
    if (y < 0 || m < 0 || d < 0 || !out.ok()) {
        throw DataError("invalid date '" + std::string(text) + "'");
    }
    return out;
}

std::string format_date(Date d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                  static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
    return buf;
}

int days_between(Date from, Date to) {
    return static_cast<int>((std::chrono::sys_days{to} - std::chrono::sys_days{from}).count());
}

double years_between(Date from, Date to) {
    return days_between(from, to) / 365.25;
}

Date add_days(Date d, int days) {
    return Date{std::chrono::sys_days{d} + std::chrono::days{days}};
}

} // namespace zsl
