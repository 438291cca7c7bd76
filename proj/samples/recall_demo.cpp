// Store pairs in a few memories, read them back, and compare.
#include <cstdio>

#include "miras/harness/runner.hpp"

using namespace miras;
using namespace miras::harness;

int main() {
  TaskSpec clean;
  clean.kind = TaskKind::kPairRecall;
  clean.d = 32;
  clean.T = 24;
  clean.orthonormal = false;
  TaskSpec noisy = clean;
  noisy.kind = TaskKind::kNoisyPairRecall;

  MirasSpec yaad = MirasSpec::yaad(2.0);
  yaad.signals.eta = 0.5;
  MirasSpec l2 = MirasSpec::l2_decay();
  l2.signals.eta = 0.5;
  const std::vector<ModelEntry> models = {MirasSpec::delta_rule(), MirasSpec::hebbian(), l2, yaad,
                                          MirasSpec::moneta(),     MirasSpec::memora(),  AttentionEntry{"attention", 0.05}};

  std::printf("%-12s %14s %14s\n", "model", "clean mse", "noisy mse");
  for (const auto& m : models) {
    double a = 0.0, b = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
      a += run_model(m, clean, s).recall_mse / 10.0;
      b += run_model(m, noisy, s).recall_mse / 10.0;
    }
    std::printf("%-12s %14.4g %14.4g\n", model_name(m).c_str(), a, b);
  }
}
