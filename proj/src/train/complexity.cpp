#include "patchgen/train/complexity.hpp"

#include <cstdio>

namespace patchgen::train {

std::vector<ComplexityRow> complexity_report(const model::GeneratorConfig& base,
                                             const std::vector<model::GeneratorKind>& kinds,
                                             const std::vector<Eigen::Index>& patch_counts) {
  std::vector<ComplexityRow> rows;
  for (auto kind : kinds) {
    for (auto k : patch_counts) {
      model::GeneratorConfig cfg = base;
      cfg.kind = kind;
      cfg.patches = k;
      const model::Generator gen(cfg);
      ComplexityRow row{kind, k, gen.param_counts(), 0, false};
      if (row.counts.total() <= kComplexityInstantiateLimit) {
        nn::ParameterStore store;
        std::mt19937_64 rng(0);
        gen.init(store, rng);
        row.store_count = nn::count_params(store);
        row.verified = true;
        if (row.store_count != row.counts.total()) {
          throw Error("parameter accounting mismatch for " + std::string(model::generator_kind_name(kind)) +
                      " k=" + std::to_string(k));
        }
      }
      rows.push_back(row);
    }
  }
  return rows;
}

std::string format_complexity(const std::vector<ComplexityRow>& rows) {
  std::string out = "kind         k     priors   per_patch  per_patch_total      shared        total\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-11s %3lld %10zu %11zu %16zu %11zu %12zu%s\n",
                  std::string(model::generator_kind_name(r.kind)).c_str(), static_cast<long long>(r.patches),
                  r.counts.priors, r.counts.per_patch_each, r.counts.per_patch_total, r.counts.shared,
                  r.counts.total(), r.verified ? "" : "  (analytic)");
    out += buf;
  }
  return out;
}

}  // namespace patchgen::train
