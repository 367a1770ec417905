#include "cascade/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#ifdef CASCADE_HAVE_OPENMP
#include <omp.h>
#endif

#include "cascade/adjoint.hpp"
#include "cascade/csvio.hpp"
#include "cascade/errors.hpp"
#include "cascade/model.hpp"
#include "cascade/picard.hpp"
#include "cascade/riccati.hpp"
#include "cascade/simulate.hpp"
#include "cascade/verify.hpp"

namespace cascade {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct CommonArgs {
    std::string config;
    std::string out = "out";
    long seed = -1;
    long paths = -1;
    double dt = -1;
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config = true) {
    auto* c = cmd->add_option("--config", args.config, "problem configuration file");
    if (needs_config) c->required();
    cmd->add_option("--out", args.out, "output directory");
    cmd->add_option("--seed", args.seed, "override mc.seed");
    cmd->add_option("--paths", args.paths, "override mc.num_paths");
    cmd->add_option("--dt", args.dt, "override mc.dt");
    cmd->add_option("--threads", args.threads,
                    "worker threads (affects speed only, never results)");
}

ProblemSpec load_with_overrides(const CommonArgs& args) {
    ProblemSpec spec = load_spec_file(args.config);
    if (args.seed >= 0) spec.mc.seed = static_cast<uint64_t>(args.seed);
    if (args.paths >= 0) spec.mc.num_paths = args.paths;
    if (args.dt > 0) spec.mc.dt = args.dt;
    spec.validate();
    if (args.threads > 0) {
#ifdef CASCADE_HAVE_OPENMP
        omp_set_num_threads(args.threads);
#endif
    }
    return spec;
}

struct ManifestTimer {
    Manifest manifest;
    Clock::time_point start = Clock::now();
    Clock::time_point stage_start = Clock::now();

    void stage(const std::string& name) {
        const auto now = Clock::now();
        const auto ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(now - stage_start).count();
        manifest.set("timings_ms." + name, std::to_string(ms));
        stage_start = now;
    }
    void finish(const std::string& dir) {
        const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() -
                                                                              start)
                            .count();
        manifest.set("timings_ms.total", std::to_string(ms));
        write_text_file(dir + "/manifest.txt", manifest.serialize());
    }
};

ManifestTimer make_manifest(const ProblemSpec& spec, const std::string& subcommand,
                            const CommonArgs& args) {
    fs::create_directories(args.out);
    ManifestTimer mt;
    char hex[19];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(emit_spec(spec))));
    mt.manifest.set("config_hash", hex);
    mt.manifest.set("seed", std::to_string(spec.mc.seed));
    mt.manifest.set("subcommand", subcommand);
    mt.manifest.set("schema.paths_csv", "1");
    mt.manifest.set("schema.adjoint_csv", "1");
    mt.manifest.set("schema.riccati_csv", "1");
    mt.manifest.set("schema.verify_csv", "1");
    return mt;
}

void write_file(const std::string& path, const std::function<void(std::ostream&)>& fn) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot write " + path);
    fn(os);
}

Policy resolve_policy(const ProblemSpec& spec, const std::string& name,
                      const std::string& out_dir,
                      std::shared_ptr<RiccatiSolution>* ric_keep = nullptr,
                      std::shared_ptr<AdjointSolution>* adj_keep = nullptr) {
    if (name == "zero") return Policy::zero(spec);
    if (name.rfind("constant:", 0) == 0) {
        std::vector<double> levels;
        std::stringstream ss(name.substr(9));
        std::string tok;
        while (std::getline(ss, tok, ',')) levels.push_back(std::strtod(tok.c_str(), nullptr));
        if (static_cast<int>(levels.size()) == 1)
            levels.assign(static_cast<size_t>(spec.n), levels[0]);
        return Policy::constant(spec, levels);
    }
    if (name == "riccati" || name == "glued") {
        const std::string file = out_dir + (name == "glued" ? "/riccati_glued_tables.csv"
                                                            : "/riccati_tables.csv");
        if (!fs::exists(file))
            throw ConfigError("policy \"" + name + "\" needs " + file + "; run solve first");
        auto sol = std::make_shared<RiccatiSolution>(read_riccati_tables_csv(spec, file));
        if (ric_keep) *ric_keep = sol;
        return make_riccati_policy(spec, sol, name == "glued");
    }
    if (name == "adjoint") {
        const std::string file = out_dir + "/adjoint.csv";
        const std::string diag = out_dir + "/adjoint_diag.csv";
        if (!fs::exists(file))
            throw ConfigError("policy \"adjoint\" needs " + file + "; run solve first");
        auto sol = std::make_shared<AdjointSolution>(
            read_adjoint_csv(spec, file, fs::exists(diag) ? diag : ""));
        if (adj_keep) *adj_keep = sol;
        return make_adjoint_policy(spec, sol);
    }
    throw ConfigError("unknown policy \"" + name +
                      "\" (zero, constant:<v>, riccati, adjoint, glued)");
}

int cmd_simulate(const CommonArgs& args, const std::string& policy_name) {
    const ProblemSpec spec = load_with_overrides(args);
    const RegimeTree tree = RegimeTree::build(spec.n);
    const ModelFunctions model = ModelFunctions::lq(spec);
    ManifestTimer mt = make_manifest(spec, "simulate", args);

    std::shared_ptr<RiccatiSolution> ric;
    std::shared_ptr<AdjointSolution> adj;
    const Policy policy = resolve_policy(spec, policy_name, args.out, &ric, &adj);
    const PathBatch batch = simulate_paths(spec, tree, model, policy, spec.mc.num_paths,
                                           spec.mc.seed);
    mt.stage("simulate");
    write_file(args.out + "/paths.csv",
               [&](std::ostream& os) { write_paths_csv(os, spec, tree, policy, batch); });
    mt.stage("write");

    std::vector<double> costs;
    for (long p = 0; p < batch.num_paths; ++p)
        if (batch.valid[static_cast<size_t>(p)]) costs.push_back(batch.cost(p));
    if (costs.empty()) throw SolverError("simulate: all paths invalid");
    const MeanStderr ms = mean_stderr(costs);
    std::cout << "simulated " << batch.num_paths << " paths (" << batch.invalid_count
              << " invalid), policy " << policy.kind_name() << "\n"
              << "cost mean " << fmt_double(ms.mean) << "  stderr " << fmt_double(ms.stderr_)
              << "\n";
    mt.finish(args.out);
    return 0;
}

int cmd_solve(const CommonArgs& args, const std::string& method, bool paper_generators,
              bool with_glued) {
    const ProblemSpec spec = load_with_overrides(args);
    const RegimeTree tree = RegimeTree::build(spec.n);
    const ModelFunctions model = ModelFunctions::lq(spec);
    ManifestTimer mt = make_manifest(spec, "solve", args);
    mt.manifest.set("method", method);

    SolveOptions opts;
    opts.max_picard = spec.mc.max_picard;
    opts.paper_generators = paper_generators;

    std::shared_ptr<RiccatiSolution> ric;
    std::shared_ptr<AdjointSolution> adj;
    SolveOutput ric_out, adj_out;

    if (method == "riccati" || method == "both") {
        opts.method = Method::riccati;
        ric_out = solve_problem(spec, tree, model, opts);
        ric = ric_out.riccati;
        write_file(args.out + "/riccati.csv",
                   [&](std::ostream& os) { write_riccati_csv(os, *ric); });
        write_file(args.out + "/riccati_tables.csv",
                   [&](std::ostream& os) { write_riccati_tables_csv(os, *ric); });
        mt.stage("solve_riccati");
        std::cout << "riccati solve: " << ric_out.rounds << " picard rounds, J = "
                  << fmt_double(ric_out.j_history.back().mean) << " +- "
                  << fmt_double(ric_out.j_history.back().std_error) << "\n";
    }
    if (method == "adjoint" || method == "both") {
        opts.method = Method::adjoint;
        adj_out = solve_problem(spec, tree, model, opts);
        adj = adj_out.adjoint;
        write_file(args.out + "/adjoint.csv",
                   [&](std::ostream& os) { write_adjoint_csv(os, *adj); });
        write_file(args.out + "/adjoint_diag.csv",
                   [&](std::ostream& os) { write_adjoint_diag_csv(os, *adj); });
        mt.stage("solve_adjoint");
        std::cout << "adjoint solve: " << adj_out.rounds << " picard rounds, J = "
                  << fmt_double(adj_out.j_history.back().mean) << " +- "
                  << fmt_double(adj_out.j_history.back().std_error) << "\n";
    }
    if (with_glued) {
        SolveOptions gopts = opts;
        gopts.method = Method::riccati;
        gopts.glued = true;
        SolveOutput glued = solve_problem(spec, tree, model, gopts);
        write_file(args.out + "/riccati_glued_tables.csv", [&](std::ostream& os) {
            write_riccati_tables_csv(os, *glued.riccati);
        });
        mt.stage("solve_glued");
        std::cout << "glued solve: " << glued.rounds << " picard rounds, J = "
                  << fmt_double(glued.j_history.back().mean) << "\n";
    }
    if (method == "both") {
        const std::vector<const PathBatch*> batches{ric_out.batch.get()};
        const auto rows = crosscheck_vs_adjoint(spec, tree, *ric, *adj, batches);
        write_file(args.out + "/crosscheck.csv", [&](std::ostream& os) {
            os << "regime,node,samples,mean_abs,max_abs\n";
            for (const auto& r : rows)
                os << r.regime << ',' << r.node << ',' << r.samples << ','
                   << fmt_double(r.mean_abs) << ',' << fmt_double(r.max_abs) << '\n';
        });
        mt.stage("crosscheck");
        double worst = 0;
        for (const auto& r : rows) worst = std::max(worst, r.mean_abs);
        std::cout << "crosscheck riccati vs adjoint: worst per-regime mean |diff| = "
                  << fmt_double(worst) << "\n";
    }
    mt.finish(args.out);
    return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& policy_name) {
    const ProblemSpec spec = load_with_overrides(args);
    const RegimeTree tree = RegimeTree::build(spec.n);
    const ModelFunctions model = ModelFunctions::lq(spec);
    ManifestTimer mt = make_manifest(spec, "evaluate", args);

    std::shared_ptr<RiccatiSolution> ric;
    std::shared_ptr<AdjointSolution> adj;
    const Policy policy = resolve_policy(spec, policy_name, args.out, &ric, &adj);
    const CostEstimate est =
        estimate_cost(spec, tree, model, policy, spec.mc.num_paths, spec.mc.seed);
    mt.stage("evaluate");
    write_file(args.out + "/evaluate.csv", [&](std::ostream& os) {
        os << "policy,mean,std_error,n_paths\n";
        os << policy_name << ',' << fmt_double(est.mean) << ',' << fmt_double(est.std_error)
           << ',' << est.num_paths << '\n';
    });
    std::cout << "J(" << policy_name << ") = " << fmt_double(est.mean) << " +- "
              << fmt_double(est.std_error) << "  (" << est.num_paths << " paths)\n";
    mt.finish(args.out);
    return 0;
}

int cmd_verify(const CommonArgs& args) {
    const ProblemSpec spec = load_with_overrides(args);
    const RegimeTree tree = RegimeTree::build(spec.n);
    const ModelFunctions model = ModelFunctions::lq(spec);
    ManifestTimer mt = make_manifest(spec, "verify", args);

    // policy under test: the damped adjoint iteration run to its fixed point
    // (the riccati solution backs the stitching rows and the glued baseline)
    VerifyInputs in;
    {
        SolveOptions opts;
        opts.method = Method::adjoint;
        opts.max_picard = spec.mc.max_picard;
        SolveOutput s = solve_problem(spec, tree, model, opts);
        in.policy = s.policy;
    }
    const std::string tables = args.out + "/riccati_tables.csv";
    if (fs::exists(tables)) {
        in.riccati = std::make_shared<RiccatiSolution>(read_riccati_tables_csv(spec, tables));
    } else {
        SolveOptions opts;
        opts.method = Method::riccati;
        opts.max_picard = spec.mc.max_picard;
        in.riccati = solve_problem(spec, tree, model, opts).riccati;
    }
    mt.stage("policy");

    in.batch = std::make_shared<PathBatch>(simulate_paths(
        spec, tree, model, in.policy, spec.mc.num_paths, spec.mc.seed));
    const std::vector<const PathBatch*> batches{in.batch.get()};
    in.adjoint_under_policy = std::make_shared<AdjointSolution>(
        solve_adjoint(spec, tree, model, in.policy, batches, false));
    mt.stage("adjoint");

    {
        SolveOptions gopts;
        gopts.method = Method::riccati;
        gopts.glued = true;
        gopts.max_picard = spec.mc.max_picard;
        SolveOutput g = solve_problem(spec, tree, model, gopts);
        in.glued_policy = g.policy;
        in.has_glued = true;
    }
    mt.stage("glued");

    char hex[19];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(emit_spec(spec))));
    const VerificationReport report = run_all_checks(spec, tree, model, hex, in);
    mt.stage("checks");
    write_file(args.out + "/verify_report.csv",
               [&](std::ostream& os) { write_verify_csv(os, report); });
    long failed = 0;
    for (const auto& r : report.rows)
        if (!r.pass) ++failed;
    std::cout << "verify: " << report.rows.size() - failed << "/" << report.rows.size()
              << " checks passed\n";
    for (const auto& r : report.rows)
        if (!r.pass)
            std::cout << "  FAIL " << r.check << "  statistic " << fmt_double(r.statistic)
                      << "  threshold " << fmt_double(r.threshold) << "\n";
    mt.finish(args.out);
    return report.all_pass() ? 0 : 3;
}

int cmd_report(const std::string& out_dir) {
    const std::string manifest_path = out_dir + "/manifest.txt";
    if (fs::exists(manifest_path)) {
        const Manifest m = Manifest::parse(read_text_file(manifest_path));
        std::cout << "run manifest (" << manifest_path << ")\n";
        for (const auto& [k, v] : m.entries) std::cout << "  " << k << " = " << v << "\n";
    }
    const std::string verify_path = out_dir + "/verify_report.csv";
    if (fs::exists(verify_path)) {
        const CsvTable t = read_csv(verify_path);
        long pass = 0;
        for (const auto& row : t.rows)
            if (row[static_cast<size_t>(t.col("pass"))] == "1") ++pass;
        std::cout << "\nverification: " << pass << "/" << t.rows.size() << " checks passed\n";
        const int c_check = t.col("check"), c_stat = t.col("statistic"),
                  c_thr = t.col("threshold"), c_pass = t.col("pass");
        for (const auto& row : t.rows)
            if (row[static_cast<size_t>(c_pass)] != "1")
                std::cout << "  FAIL " << row[static_cast<size_t>(c_check)] << " statistic "
                          << row[static_cast<size_t>(c_stat)] << " threshold "
                          << row[static_cast<size_t>(c_thr)] << "\n";
    }
    const std::string eval_path = out_dir + "/evaluate.csv";
    if (fs::exists(eval_path)) {
        const CsvTable t = read_csv(eval_path);
        std::cout << "\ncost estimates\n";
        for (const auto& row : t.rows) {
            std::cout << " ";
            for (size_t i = 0; i < row.size(); ++i) std::cout << " " << t.header[i] << "=" << row[i];
            std::cout << "\n";
        }
    }
    const std::string ric_path = out_dir + "/riccati.csv";
    if (fs::exists(ric_path)) {
        const CsvTable t = read_csv(ric_path);
        std::cout << "\nriccati.csv: " << t.rows.size() << " rows";
        if (!t.rows.empty()) {
            const auto& first = t.rows.front();
            const auto& last = t.rows.back();
            std::cout << "; first (regime \"" << first[0] << "\", node " << first[1]
                      << ", t " << first[2] << ", P " << first[3] << ")"
                      << "; last (regime \"" << last[0] << "\", node " << last[1] << ", t "
                      << last[2] << ", P " << last[3] << ")";
        }
        std::cout << "\n";
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"regime-switched stochastic LQ control: simulate, solve, verify"};
    app.require_subcommand(1);

    CommonArgs sim_args, solve_args, eval_args, verify_args;
    std::string sim_policy = "zero", eval_policy = "riccati";
    std::string method = "riccati";
    bool paper_generators = false, with_glued = false;
    std::string report_dir = "out";

    auto* sim = app.add_subcommand("simulate", "simulate paths under a named policy");
    add_common(sim, sim_args);
    sim->add_option("--policy", sim_policy, "zero | constant:<v> | riccati | adjoint | glued");

    auto* solve = app.add_subcommand("solve", "solve the control problem");
    add_common(solve, solve_args);
    solve->add_option("--method", method, "adjoint | riccati | both")
        ->check(CLI::IsMember({"adjoint", "riccati", "both"}));
    solve->add_flag("--paper-generators", paper_generators,
                    "use the printed generator forms (comparison runs)");
    solve->add_flag("--with-glued", with_glued, "also solve the glued (no-continuation) policy");

    auto* eval = app.add_subcommand("evaluate", "estimate the cost of a named policy");
    add_common(eval, eval_args);
    eval->add_option("--policy", eval_policy, "zero | constant:<v> | riccati | adjoint | glued");

    auto* verify = app.add_subcommand("verify", "run the full check suite");
    add_common(verify, verify_args);

    auto* report = app.add_subcommand("report", "summarize outputs of earlier runs");
    report->add_option("--out", report_dir, "output directory to summarize");

    try {
        app.parse(argc, argv);
        if (sim->parsed()) return cmd_simulate(sim_args, sim_policy);
        if (solve->parsed()) return cmd_solve(solve_args, method, paper_generators, with_glued);
        if (eval->parsed()) return cmd_evaluate(eval_args, eval_policy);
        if (verify->parsed()) return cmd_verify(verify_args);
        if (report->parsed()) return cmd_report(report_dir);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace cascade
