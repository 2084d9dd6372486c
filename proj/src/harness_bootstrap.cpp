#include <cmath>
#include <random>

#include "coarse/harness.hpp"
#include "coarse/parallel.hpp"

namespace coarse::harness {

BootstrapResult bootstrap_second_step(const Population& pop, int b,
                                      const std::function<double(const Population&)>& method,
                                      uint64_t seed, int threads, bool identity_resample) {
    if (b < 1) throw config_error("bootstrap: B must be >= 1");
    if (!method) throw config_error("bootstrap: no method");
    const int64_t n = pop.size();
    if (n == 0) throw config_error("bootstrap: population is empty");

    BootstrapResult out;
    out.replicates.assign(b, 0.0);
    parallel_jobs(b, threads, [&](int64_t r) {
        std::vector<int64_t> indices(n);
        if (identity_resample) {
            for (int64_t i = 0; i < n; ++i) indices[i] = i;
        } else {
            std::mt19937_64 rng(util::mix64(seed, static_cast<uint64_t>(r)));
            std::uniform_int_distribution<int64_t> draw(0, n - 1);
            for (int64_t i = 0; i < n; ++i) indices[i] = draw(rng);
        }
        out.replicates[r] = method(pop.gather(indices));
    });

    for (double p : out.replicates) out.mean += p;
    out.mean /= b;
    if (b >= 2) {
        double ss = 0.0;
        for (double p : out.replicates) ss += (p - out.mean) * (p - out.mean);
        out.sd = std::sqrt(ss / (b - 1));
    }
    return out;
}

}  // namespace coarse::harness
