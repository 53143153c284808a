#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "vorder/inverse.hpp"

namespace vorder {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Structured text. Schema in docs/config.md.
// ---------------------------------------------------------------------------

Json to_json(const Inclusion& inc);
Json to_json(const Domain& domain);
Json to_json(const OrderField& field);
Json to_json(const RecoveryReport& report);
Json to_json(const AssumptionReport& report);

Inclusion inclusion_from_json(const Json& j);
Domain domain_from_json(const Json& j);
OrderField order_field_from_json(const Json& j);

/// JSON text with every float printed to 17 significant digits.
std::string dump(const Json& j, int indent = 2);

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// %.17g, with "nan"/"inf" spelled out.
std::string format_number(double x);

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  CsvTable& row(const std::vector<double>& values);
  CsvTable& row(const std::vector<std::string>& cells);
  std::size_t rows() const { return rows_; }
  const std::string& text() const { return text_; }

 private:
  std::size_t columns_;
  std::size_t rows_ = 0;
  std::string text_;
};

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace vorder
