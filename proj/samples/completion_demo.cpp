// Recover an ill-conditioned 60x60x60 tensor of multilinear rank 4 from 10%
// of its entries, with ScaledGD and with plain GD.

#include <iostream>

#include "tuckergd/tuckergd.hpp"

int main() {
  using namespace tuckergd;
  const Dims n{60, 60, 60};
  const Ranks r{4, 4, 4};
  const GroundTruth truth = make_ground_truth(n, r, TruthStyle::prescribed_kappa(10), 7);
  const Tensor3 x = truth.tensor();
  const ObservationSet obs = observe(x, sample_mask(n, 0.1, 7), 0.1);

  CompletionParams params;
  params.max_iters = 150;
  const Trajectory scaled = solve_completion(obs, r, params, &x);
  const Trajectory gd = solve_completion_gd(obs, r, params, truth);

  std::cout << "observed " << obs.size() << " of " << x.size() << " entries, kappa " << truth.sigma.kappa << '\n';
  for (const auto* t : {&scaled, &gd}) {
    const IterRecord& last = t->iterations.back();
    std::cout << (t == &scaled ? "scaledgd" : "gd      ") << "  iterations " << last.iter << "  rel_err "
              << last.rel_err << "  stop " << to_string(t->stop_reason) << '\n';
  }
}
