#include "edbench/registry.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace edbench {

using nlohmann::json;

namespace {

VariableDef parse_variable(const json& j) {
    VariableDef def;
    def.id = j.at("id").get<std::string>();
    def.canonical_unit = j.value("unit", std::string{});
    if (j.contains("conversions")) {
        for (const auto& c : j["conversions"]) {
            UnitConversion conv;
            conv.from_unit = c.at("from").get<std::string>();
            if (c.contains("formula")) {
                const auto formula = c["formula"].get<std::string>();
                if (formula != "f_to_c")
                    throw DataError("unknown conversion formula: " + formula);
                conv.is_f_to_c = true;
            } else {
                conv.factor = c.at("factor").get<double>();
            }
            def.conversions.push_back(conv);
        }
    }
    if (j.contains("outlier")) {
        OutlierRule rule;
        const auto& o = j["outlier"];
        if (o.contains("lower")) rule.lower = o["lower"].get<double>();
        if (o.contains("upper")) rule.upper = o["upper"].get<double>();
        rule.in_unit = o.value("in_unit", std::string{});
        if (rule.lower && rule.upper && !(*rule.lower < *rule.upper))
            throw DataError("outlier rule for " + def.id + ": lower must be < upper");
        def.outlier = rule;
    }
    return def;
}

}  // namespace

VariableRegistry VariableRegistry::load(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw DataError("cannot open variable registry: " + json_path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

VariableRegistry VariableRegistry::parse(const std::string& json_text) {
    VariableRegistry reg;
    json j = json::parse(json_text);
    auto load_group = [&](const char* key, VariableKind kind, std::vector<VariableDef>& out) {
        if (!j.contains(key)) return;
        for (const auto& v : j[key]) {
            VariableDef def = parse_variable(v);
            if (reg.by_id_.count(def.id))
                throw DataError("duplicate variable id in registry: " + def.id);
            reg.by_id_.emplace(def.id, std::make_pair(kind, out.size()));
            out.push_back(std::move(def));
        }
    };
    load_group("vitals", VariableKind::Vital, reg.vitals_);
    load_group("labs", VariableKind::Lab, reg.labs_);
    load_group("biometrics", VariableKind::Biometric, reg.biometrics_);

    std::string canon;
    auto describe = [&](const std::vector<VariableDef>& defs) {
        for (const auto& d : defs) {
            canon += d.id + "|" + d.canonical_unit;
            if (d.outlier) {
                canon += "|lo:";
                if (d.outlier->lower) canon += fmt_double(*d.outlier->lower);
                canon += "|hi:";
                if (d.outlier->upper) canon += fmt_double(*d.outlier->upper);
                canon += "|in:" + d.outlier->in_unit;
            }
            canon += "\n";
        }
    };
    describe(reg.vitals_);
    describe(reg.labs_);
    describe(reg.biometrics_);
    reg.content_hash_ = sha256_hex(canon);
    return reg;
}

const VariableDef& VariableRegistry::get(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw DataError("unknown variable: " + id);
    switch (it->second.first) {
        case VariableKind::Vital: return vitals_[it->second.second];
        case VariableKind::Lab: return labs_[it->second.second];
        case VariableKind::Biometric: return biometrics_[it->second.second];
    }
    throw DataError("unreachable");
}

std::optional<VariableKind> VariableRegistry::kind_of(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second.first;
}

}  // namespace edbench
