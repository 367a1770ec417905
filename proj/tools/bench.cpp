// Benchmark of the OpenMP kernels against their serial references:
// path simulation and the regression Gram assembly.

#include <chrono>
#include <cstdio>
#include <string>

#ifdef CASCADE_HAVE_OPENMP
#include <omp.h>
#endif

#include "cascade/model.hpp"
#include "cascade/regression.hpp"
#include "cascade/simulate.hpp"

using namespace cascade;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

const char* kConfig = R"(
n = 2
horizon = 1.0
x0 = [1.0, 1.0]
mc.num_paths = 40000
mc.dt = 0.005
mc.seed = 20240917

[regime.""]
1.mu = -0.2
1.nu = 0.3
1.v = 0
1.gamma = 1
2.mu = -0.2
2.nu = 0.3
2.v = 0
2.gamma = 1
)";

}  // namespace

int main(int argc, char** argv) {
    long paths = 40000;
    if (argc > 1) paths = std::strtol(argv[1], nullptr, 10);

    ProblemSpec spec = load_spec(kConfig);
    spec.mc.num_paths = paths;
    const RegimeTree tree = RegimeTree::build(spec.n);
    const ModelFunctions model = ModelFunctions::lq(spec);
    const Policy policy = Policy::zero(spec);

#ifdef CASCADE_HAVE_OPENMP
    const int max_threads = omp_get_max_threads();
#else
    const int max_threads = 1;
#endif
    std::printf("simulate kernel, %ld paths x %d steps, n=%d\n", paths, spec.num_steps(),
                spec.n);

    auto t0 = Clock::now();
    const PathBatch ref = simulate_paths_serial(spec, tree, model, policy, paths, spec.mc.seed);
    const double t_serial = ms_since(t0);
    std::printf("  serial reference      %10.1f ms\n", t_serial);

    for (int threads = 1; threads <= max_threads; threads *= 2) {
#ifdef CASCADE_HAVE_OPENMP
        omp_set_num_threads(threads);
#endif
        t0 = Clock::now();
        const PathBatch par = simulate_paths(spec, tree, model, policy, paths, spec.mc.seed);
        const double t_par = ms_since(t0);
        const bool identical = par.states == ref.states && par.regime == ref.regime;
        std::printf("  openmp %2d thread(s)   %10.1f ms   speedup %.2fx   %s\n", threads,
                    t_par, t_serial / t_par, identical ? "bit-identical" : "MISMATCH");
    }

    // Gram assembly kernel
    const int dim = 2, degree = 3;
    const PolyBasis basis = PolyBasis::make(dim, degree);
    const long count = paths * 4;
    std::vector<double> feats(static_cast<size_t>(count) * basis.size());
    const NoiseStream noise(7);
    for (long s = 0; s < count; ++s) {
        double z[2] = {noise.gaussian(static_cast<uint64_t>(s), 0, 0),
                       noise.gaussian(static_cast<uint64_t>(s), 0, 1)};
        basis.features(z, feats.data() + static_cast<size_t>(s) * basis.size());
    }
    std::printf("gram assembly kernel, %ld samples, %d basis functions\n", count,
                basis.size());
    t0 = Clock::now();
    const auto g_ref = StepFitter::gram_reference(basis, feats, count);
    const double t_gref = ms_since(t0);
    std::printf("  serial reference      %10.1f ms\n", t_gref);
    for (int threads = 1; threads <= max_threads; threads *= 2) {
#ifdef CASCADE_HAVE_OPENMP
        omp_set_num_threads(threads);
#endif
        t0 = Clock::now();
        const auto g = StepFitter::gram_blocked(basis, feats, count);
        const double t_g = ms_since(t0);
        double max_rel = 0;
        for (size_t i = 0; i < g.size(); ++i) {
            const double denom = std::max(1.0, std::abs(g_ref[i]));
            max_rel = std::max(max_rel, std::abs(g[i] - g_ref[i]) / denom);
        }
        std::printf("  openmp %2d thread(s)   %10.1f ms   speedup %.2fx   max rel dev %.2e\n",
                    threads, t_g, t_gref / t_g, max_rel);
    }
    return 0;
}
