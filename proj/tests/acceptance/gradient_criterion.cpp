#include <cstdio>
#include <type_traits>

#include "../gradient_check.hpp"
#include "outcome.hpp"

static_assert(std::is_same_v<flag::Real, double>, "this file must be built against the double-precision library");

namespace acceptance {
namespace {

constexpr std::size_t kFixtures = 20;
constexpr double kEps = 1e-5;
constexpr double kMaxRelativeError = 1e-4;

}  // namespace

Outcome gradient_fidelity() {
  double worst = 0;
  std::string where;
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < kFixtures; ++seed) {
    for (auto kind : {flag::LayerKind::GATv2, flag::LayerKind::GAT, flag::LayerKind::GCN}) {
      auto f = flag_test::gradient_fixture(1000 + seed, kind);
      flag::Model model(f.config);
      flag_test::perturb_biases(model, seed);
      const auto r = flag_test::check_model_gradients(model, f.graph, f.target, kEps);
      checked += r.n_checked;
      if (r.max_relative_error > worst) {
        worst = r.max_relative_error;
        where = flag::to_string(kind) + " fixture " + std::to_string(seed) + " " + r.worst_parameter;
      }
    }
  }
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu fixtures x 3 layer kinds, %zu gradients, max relative error %.3g (%s)", kFixtures,
                checked, worst, where.c_str());
  return {worst < kMaxRelativeError, buf};
}

}  // namespace acceptance
