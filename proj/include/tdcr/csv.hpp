#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace tdcr::csv {

/// RFC-4180 field: quoted when it contains a comma, quote, CR or LF.
std::string escape(std::string_view field);

/// Writes one record terminated by "\n".
void write_row(std::ostream& os, const std::vector<std::string>& fields);

/// Splits one record, honouring quoted fields and doubled quotes. Records that
/// span lines are not supported.
std::vector<std::string> parse_row(std::string_view line);

/// Shortest text that reads back to the same double.
std::string format(double value);

} // namespace tdcr::csv
