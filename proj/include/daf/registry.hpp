#pragma once

#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>

#include "daf/metrics.hpp"
#include "daf/scoring.hpp"

namespace daf {

namespace detail {

// "scheme:arg" -> {scheme, arg}. Full http(s) URLs pass through as one piece.
inline std::pair<std::string, std::string> split_spec(const std::string& spec) {
  if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0) return {"http", spec};
  const auto colon = spec.find(':');
  if (colon == std::string::npos) return {spec, ""};
  return {spec.substr(0, colon), spec.substr(colon + 1)};
}

template <typename Factory>
const Factory& find_factory(const std::map<std::string, Factory>& table, const std::string& scheme,
                            const char* what) {
  const auto it = table.find(scheme);
  if (it == table.end()) {
    std::string known;
    for (const auto& [k, v] : table) known += (known.empty() ? "" : ", ") + k;
    throw std::runtime_error(std::string("unknown ") + what + ": " + scheme + " (known: " + known + ")");
  }
  return it->second;
}

}  // namespace detail

// Scoring backends resolved by name from the run configuration, e.g.
// "stub:scores.json", "text-stub:scores.json", "constant:0.5".
class BackendRegistry {
 public:
  using Factory = std::function<std::shared_ptr<ScorerBackend>(const std::string& arg)>;

  void add(const std::string& scheme, Factory factory) { table_[scheme] = std::move(factory); }

  std::shared_ptr<ScorerBackend> make(const std::string& spec) const {
    const auto [scheme, arg] = detail::split_spec(spec);
    return detail::find_factory(table_, scheme, "backend")(arg);
  }

  BackendList make_all(const std::vector<std::string>& specs) const {
    BackendList out;
    out.reserve(specs.size());
    for (const auto& s : specs) out.push_back(make(s));
    return out;
  }

  static BackendRegistry with_builtins() {
    BackendRegistry r;
    r.add("stub", [](const std::string& arg) {
      return std::make_shared<StubBackend>(StubBackend::from_json_file(arg));
    });
    r.add("text-stub", [](const std::string& arg) {
      return std::make_shared<TextLogitBackend>(TextLogitBackend::from_json_file(arg));
    });
    r.add("constant", [](const std::string& arg) {
      return std::make_shared<ConstantBackend>(arg.empty() ? 0.0 : std::stod(arg));
    });
    return r;
  }

 private:
  std::map<std::string, Factory> table_;
};

// Equivalence scorers resolved by name: "token-overlap", "table:pairs.json".
class EquivalenceRegistry {
 public:
  using Factory = std::function<std::shared_ptr<EquivalenceScorer>(const std::string& arg)>;

  void add(const std::string& scheme, Factory factory) { table_[scheme] = std::move(factory); }

  std::shared_ptr<EquivalenceScorer> make(const std::string& spec) const {
    const auto [scheme, arg] = detail::split_spec(spec);
    return detail::find_factory(table_, scheme, "equivalence scorer")(arg);
  }

  static EquivalenceRegistry with_builtins() {
    EquivalenceRegistry r;
    r.add("token-overlap", [](const std::string&) { return std::make_shared<TokenOverlapScorer>(); });
    r.add("table", [](const std::string& arg) {
      return std::make_shared<TableEquivalenceScorer>(TableEquivalenceScorer::from_json_file(arg));
    });
    return r;
  }

 private:
  std::map<std::string, Factory> table_;
};

}  // namespace daf
