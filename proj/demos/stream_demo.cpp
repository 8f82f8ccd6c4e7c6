// Streams simulated batches through the renewable estimator and compares the
// result with the full-data fit on the same observations.

#include <iostream>
#include <vector>

#include "lpre/lpre.hpp"

int main() {
  lpre::sim::DgpConfig dgp;
  dgp.seed = 2024;

  const lpre::sim::Scenario scenario{.n_total = 20000, .n_b = 200};
  std::vector<lpre::Batch> kept;

  auto state = lpre::RenewableState::zero(dgp.p());
  long long index = 0;
  for (std::size_t n : scenario.batch_sizes()) {
    lpre::Batch batch = lpre::sim::gen_batch(dgp, n, ++index);
    state = lpre::renew_update(state, batch);
    kept.push_back(std::move(batch));  // only so the full fit can be shown below
  }

  const auto renew = lpre::estimate_report(state, 0.95);
  lpre::write_report_table(std::cout, renew);

  const auto beta_full = lpre::fit_full(kept);
  lpre::write_report_table(std::cout, lpre::full_report(kept, beta_full, 0.95));
  std::cout << "max |renew - full| = " << lpre::norm_inf(state.beta - beta_full) << '\n';
  return 0;
}
