#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace zsl {

using Date = std::chrono::year_month_day;

/// Parses YYYY-MM-DD. Throws DataError on anything else.
Date parse_date(std::string_view text);
std::string format_date(Date d);

/// Signed age difference in years (days / 365.25).
double years_between(Date from, Date to);

Date add_days(Date d, int days);
int days_between(Date from, Date to);

} // namespace zsl
