#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "edbench/core.hpp"

namespace edbench {

/// Out-of-range values become missing. Bounds are exclusive: only values
/// strictly beyond a bound are removed. When `in_unit` is set the rule is
/// evaluated in that source unit (the temperature rule is stated in
/// Fahrenheit and applies before conversion).
struct OutlierRule {
    std::optional<double> lower;
    std::optional<double> upper;
    std::string in_unit;  // empty: canonical unit
};

/// Unit conversion into the canonical unit; either a plain factor or the
/// named affine formula "f_to_c".
struct UnitConversion {
    std::string from_unit;
    bool is_f_to_c = false;
    double factor = 1.0;
};

struct VariableDef {
    std::string id;
    std::string canonical_unit;
    std::vector<UnitConversion> conversions;
    std::optional<OutlierRule> outlier;
};

enum class VariableKind { Vital, Lab, Biometric };

/// Canonical names and rules for the vitals, labs, and biometrics a dataset
/// build understands. Shipped as a JSON data file so the lists can be
/// extended without code changes.
class VariableRegistry {
  public:
    static VariableRegistry load(const std::string& json_path);
    static VariableRegistry parse(const std::string& json_text);

    const std::vector<VariableDef>& vitals() const { return vitals_; }
    const std::vector<VariableDef>& labs() const { return labs_; }
    const std::vector<VariableDef>& biometrics() const { return biometrics_; }

    bool has(const std::string& id) const { return by_id_.count(id) > 0; }
    const VariableDef& get(const std::string& id) const;
    std::optional<VariableKind> kind_of(const std::string& id) const;

    /// Stable content hash over ids and rules (checkpoint compatibility).
    std::string content_hash() const { return content_hash_; }

  private:
    std::vector<VariableDef> vitals_, labs_, biometrics_;
    std::map<std::string, std::pair<VariableKind, std::size_t>> by_id_;
    std::string content_hash_;
};

}  // namespace edbench
