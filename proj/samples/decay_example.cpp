// Short correlator-decay run on a config file:
//   decay_example [config.json] [samples]
// Prints rho_L(1, n) per distance and the fitted decay rate.
#include <cstdio>
#include <cstdlib>
#include <string>

#include "kslab/kslab.hpp"

int main(int argc, char** argv) {
  const std::string path = argc > 1 ? argv[1] : KSLAB_SAMPLE_CONFIG;
  kslab::RunOverrides ov;
  ov.samples = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 200;
  try {
    const auto cfg = kslab::load_config(path, ov);
    const auto s = kslab::estimate_series(cfg.model, cfg.run.L, cfg.run.distances, cfg.run.samples, cfg.run.seed);
    for (std::size_t i = 0; i < s.distances.size(); ++i) {
      std::printf("n=%d  rho=%.6e  +- %.1e\n", s.distances[i], s.means[i], s.std_errors[i]);
    }
    const auto fit = kslab::decay_fit(s, cfg.run.min_distance);
    std::printf("eta=%.4f +- %.4f  R^2=%.4f  (config %s)\n", fit.eta, fit.eta_std_error, fit.r_squared, cfg.hash.c_str());
  } catch (const kslab::Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  }
  return 0;
}
