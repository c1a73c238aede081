// Command-line front end: train, compare, bench-ad, estimate, list-problems.

#include "dfvm/bench.hpp"
#include "dfvm/divest.hpp"
#include "dfvm/field.hpp"
#include "dfvm/io.hpp"
#include "dfvm/loss.hpp"
#include "dfvm/problems.hpp"
#include "dfvm/sampling.hpp"
#include "dfvm/train.hpp"

#include <CLI11.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

namespace fs = std::filesystem;
using namespace dfvm;

namespace {

constexpr int kUsageError = 2;
constexpr int kRunError = 1;

constexpr const char* kRunsEnv = "DFVM_RUNS_DIR";

fs::path runs_root() {
    const char* env = std::getenv(kRunsEnv);
    return env && *env ? fs::path(env) : fs::path("runs");
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// Flags shared by train and compare; each maps onto a config key.
struct RunFlags {
    std::string config_file;
    std::vector<std::pair<std::string, std::string>> values;
    std::vector<std::string> sets;

    void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        app->add_option_function<std::string>(
            flag, [this, key](const std::string& v) { values.emplace_back(key, v); }, help);
    }

    void attach(CLI::App* app, bool with_method) {
        app->add_option("--config", config_file, "Run configuration file");
        add(app, "--problem", "problem.name", "poisson-hd | poisson-lshape | nonlinear | black-scholes");
        add(app, "--dim", "problem.dim", "Spatial dimension (poisson-hd, nonlinear)");
        if (with_method) add(app, "--method", "method.name", "dfvm-cube | dfvm-sphere | pinn");
        add(app, "--steps", "train.steps", "Training steps");
        add(app, "--lr", "train.lr", "Learning rate");
        add(app, "--seed", "train.seed", "Seed for sampling and initialization");
        add(app, "--width", "network.width", "Network width");
        add(app, "--depth", "network.depth", "Hidden layers (fcnn) or blocks (resnet)");
        add(app, "--eps", "loss.eps", "Control-volume radius");
        add(app, "--k", "loss.k", "Sphere samples or nodes per cube face");
        add(app, "--lambda", "loss.lambda", "Boundary loss weight");
        add(app, "--eval-every", "train.eval_every", "Steps between metric rows");
        app->add_option("--set", sets, "Any config key: section.key=value (repeatable)");
    }

    RunConfig load() const {
        RunConfig cfg = config_file.empty() ? RunConfig{} : load_run_config(config_file);
        for (const auto& [k, v] : values) set_option(cfg, k, v);
        for (const std::string& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + s + "'");
            set_option(cfg, s.substr(0, eq), s.substr(eq + 1));
        }
        cfg.resolved();  // surfaces missing or unknown problem names early
        return cfg;
    }
};

std::string run_name(const RunConfig& cfg) {
    return cfg.problem + "-d" + std::to_string(cfg.make_problem().spatial_dim()) + "-" + to_string(cfg.method) +
           "-s" + std::to_string(cfg.seed);
}

struct RunOutcome {
    double re = 0.0;
    double re_initial = 0.0;
    double seconds = 0.0;
};

RunOutcome execute(const RunConfig& cfg, const fs::path& dir, bool echo_rows) {
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "config.ini");
        out << to_ini(cfg);
    }
    std::ofstream metrics(dir / "metrics.csv");
    if (!metrics) throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());
    metrics << metrics_header() << '\n';
    TrainConfig tc = cfg.train();
    tc.run_dir = dir;
    const TrainResult result =
        train(cfg.make_problem(), cfg.network(), cfg.loss(), tc, [&](const MetricsRow& row) {
            metrics << format_metrics_row(row) << '\n';
            metrics.flush();
            if (echo_rows) std::cerr << format_metrics_row(row) << '\n';
        });
    const MetricsRow& last = result.metrics.back();
    return {last.re, last.re_initial, last.seconds};
}

std::string fmt(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

int cmd_train(const RunFlags& flags, const std::string& out, bool quiet) {
    RunConfig cfg = flags.load();
    if (!out.empty()) cfg.output_dir = out;
    const fs::path dir = cfg.output_dir.empty() ? runs_root() / run_name(cfg) : fs::path(cfg.output_dir);
    const RunOutcome r = execute(cfg, dir, !quiet);
    std::cout << "run_dir=" << dir.string() << " final_re=" << fmt(r.re);
    if (!std::isnan(r.re_initial)) std::cout << " final_re0=" << fmt(r.re_initial);
    std::cout << " seconds=" << fmt(r.seconds) << '\n';
    return 0;
}

int cmd_compare(const RunFlags& flags, const std::string& methods_text, const std::string& out, bool parallel) {
    const RunConfig base = flags.load();
    const std::vector<std::string> methods = split_list(methods_text);
    if (methods.size() < 2) throw ConfigError("--methods: at least two methods are required");
    std::vector<RunConfig> configs;
    for (const std::string& m : methods) {
        RunConfig cfg = base;
        set_option(cfg, "method.name", m);
        configs.push_back(cfg);
    }
    const fs::path root = base.output_dir.empty() ? runs_root() / ("compare-" + base.problem) : fs::path(base.output_dir);
    auto dir_for = [&](std::size_t i) { return root / (std::to_string(i) + "-" + methods[i]); };

    std::vector<RunOutcome> outcomes(configs.size());
    if (!parallel) {
        for (std::size_t i = 0; i < configs.size(); ++i) outcomes[i] = execute(configs[i], dir_for(i), false);
    } else {
        std::vector<pid_t> children;
        for (std::size_t i = 0; i < configs.size(); ++i) {
            const pid_t pid = fork();
            if (pid < 0) throw std::runtime_error("fork failed");
            if (pid == 0) {
                try {
                    execute(configs[i], dir_for(i), false);
                    std::_Exit(0);
                } catch (const std::exception& e) {
                    std::cerr << "error: " << methods[i] << ": " << e.what() << '\n';
                    std::_Exit(kRunError);
                }
            }
            children.push_back(pid);
        }
        for (pid_t pid : children) {
            int status = 0;
            waitpid(pid, &status, 0);
            if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) throw std::runtime_error("a compare run failed");
        }
        for (std::size_t i = 0; i < configs.size(); ++i) {
            const MetricsRow last = read_metrics_csv(dir_for(i) / "metrics.csv").back();
            outcomes[i] = {last.re, last.re_initial, last.seconds};
        }
    }

    std::ostringstream csv;
    csv << "method,re,re0,seconds,timing\n";
    for (std::size_t i = 0; i < configs.size(); ++i) {
        csv << methods[i] << ',' << fmt(outcomes[i].re) << ',' << fmt(outcomes[i].re_initial) << ','
            << fmt(outcomes[i].seconds) << ',' << (parallel ? "non-comparable" : "sequential") << '\n';
    }
    if (out.empty()) {
        std::cout << csv.str();
    } else {
        std::ofstream f(out);
        if (!f) throw std::runtime_error("cannot write " + out);
        f << csv.str();
    }
    return 0;
}

std::vector<std::size_t> parse_dims(const std::string& text) {
    std::vector<std::size_t> dims;
    for (const std::string& s : split_list(text)) {
        try {
            const long v = std::stol(s);
            if (v <= 0) throw std::out_of_range("");
            dims.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw ConfigError("--dims: '" + s + "' is not a positive integer");
        }
    }
    if (dims.empty()) throw ConfigError("--dims: empty list");
    return dims;
}

int cmd_bench(BenchConfig cfg, const std::string& dims, const std::string& arch, const std::string& brute_mode,
              const std::string& step_methods, std::size_t step_count, const std::string& step_out) {
    cfg.dims = parse_dims(dims);
    cfg.kind = parse_architecture(arch);
    if (brute_mode == "dense") {
        cfg.brute_mode = divest::BruteMode::Dense;
    } else if (brute_mode == "scalar") {
        cfg.brute_mode = divest::BruteMode::Scalar;
    } else {
        throw ConfigError("--brute-mode: expected dense or scalar, got '" + brute_mode + "'");
    }
    std::cout << bench_header() << '\n';
    for (const BenchRow& row : bench_derivatives(cfg)) std::cout << format_bench_row(row) << '\n' << std::flush;

    if (!step_methods.empty()) {
        std::vector<Method> methods;
        for (const std::string& m : split_list(step_methods)) methods.push_back(parse_method(m));
        const auto rows = bench_training_steps(cfg.dims, methods, cfg.width, cfg.depth, step_count, cfg.seed);
        std::ostringstream csv;
        csv << step_timing_header() << '\n';
        for (const auto& r : rows) csv << format_step_timing_row(r) << '\n';
        if (step_out.empty()) {
            std::cout << '\n' << csv.str();
        } else {
            std::ofstream f(step_out);
            f << csv.str();
        }
    }
    return 0;
}

int cmd_estimate(const std::string& field_name, const std::string& est, std::size_t d, double r, std::size_t k,
                 std::uint64_t seed, const std::string& point_text, const std::string& coef, bool antithetic,
                 double eps_fd, double h) {
    const auto names = test_field_names();
    if (std::find(names.begin(), names.end(), field_name) == names.end()) {
        throw ConfigError("--field: unknown field '" + field_name + "'");
    }
    const auto u = make_test_field(field_name, d);
    CoefficientField a = CoefficientField::identity(d);
    if (coef == "one-plus-sq") {
        a = CoefficientField::scalar(
            d,
            [d](std::span<const double> x) {
                double s = 1.0;
                for (std::size_t i = 0; i < d; ++i) s += x[i] * x[i];
                return s;
            },
            [d](std::span<const double> x, std::span<double> g) {
                for (std::size_t i = 0; i < d; ++i) g[i] = 2.0 * x[i];
            });
    } else if (coef != "identity") {
        throw ConfigError("--coef: expected identity or one-plus-sq, got '" + coef + "'");
    }
    Point x(d, 0.0);
    if (!point_text.empty()) {
        const auto parts = split_list(point_text);
        if (parts.size() != 1 && parts.size() != d) throw ConfigError("--point: give 1 or d comma-separated values");
        for (std::size_t i = 0; i < d; ++i) x[i] = std::stod(parts.size() == 1 ? parts[0] : parts[i]);
    }
    const Matrix dirs = sphere_directions(d, k, antithetic, seed);
    double value = 0.0;
    if (est == "q1") {
        value = divest::q1_sphere_ad(*u, a, x, r, dirs);
    } else if (est == "q2") {
        value = divest::q2_sphere_diff(*u, a, x, r, eps_fd > 0.0 ? eps_fd : r, dirs);
    } else if (est == "q3") {
        value = divest::q3_sphere_onesided(*u, a, x, r, dirs);
    } else if (est == "q4") {
        if (coef != "identity") throw ConfigError("--est q4 assumes the identity coefficient");
        value = divest::q4_constant_alpha(*u, x, r, dirs);
    } else if (est == "q5") {
        value = divest::q5_split(*u, a, x, r, dirs);
    } else {
        throw ConfigError("--est: unknown estimator '" + est + "' (expected q1..q5)");
    }
    const double oracle = divest::brute_divergence(*u, a, x, h);
    std::printf("estimate=%.15g oracle=%.15g gap=%.3e\n", value, oracle, std::abs(value - oracle));
    return 0;
}

int cmd_list_problems() {
    std::printf("%-16s %-10s %-8s %-9s %-9s %-6s\n", "name", "input_dim", "eps", "interior", "boundary", "width");
    for (const std::string& name : problem_names()) {
        const PdeProblem p = make_problem(name, 2);
        const std::string dim = (name == "poisson-hd" || name == "nonlinear") ? "d (--dim)" :
                                                                                std::to_string(p.input_dim());
        const std::string boundary = name == "poisson-hd" ? "100d" : name == "nonlinear" ? "60d" :
                                                                                          std::to_string(p.default_boundary);
        std::printf("%-16s %-10s %-8g %-9zu %-9s %-6zu\n", name.c_str(), dim.c_str(), p.default_eps,
                    p.default_interior, boundary.c_str(), p.default_width);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep finite volume PDE solver"};
    app.require_subcommand(1);

    RunFlags train_flags;
    std::string train_out;
    bool quiet = false;
    auto* train_cmd = app.add_subcommand("train", "Train one network and write a run directory");
    train_flags.attach(train_cmd, true);
    train_cmd->add_option("--out", train_out, std::string("Run directory (default: $") + kRunsEnv + "/<name>)");
    train_cmd->add_flag("--quiet", quiet, "Do not echo metric rows to stderr");

    RunFlags compare_flags;
    std::string methods = "dfvm-cube,dfvm-sphere,pinn", compare_out;
    bool parallel = false;
    auto* compare_cmd = app.add_subcommand("compare", "Train several methods with shared seeds and budget");
    compare_flags.attach(compare_cmd, false);
    compare_cmd->add_option("--methods", methods, "Comma-separated methods")->capture_default_str();
    compare_cmd->add_option("--out", compare_out, "Comparison CSV (default: stdout)");
    compare_cmd->add_flag("--parallel", parallel, "Run methods in parallel processes (timings not comparable)");

    BenchConfig bench;
    std::string dims = "2,10,50", arch = "resnet", brute_mode = "dense", step_methods, step_out;
    std::size_t step_count = 3;
    auto* bench_cmd = app.add_subcommand("bench-ad", "Time value, gradient and second-order evaluation against d");
    bench_cmd->add_option("--dims", dims, "Comma-separated dimensions")->capture_default_str();
    bench_cmd->add_option("--width", bench.width, "Network width")->capture_default_str();
    bench_cmd->add_option("--depth", bench.depth, "Network depth")->capture_default_str();
    bench_cmd->add_option("--arch", arch, "fcnn | resnet")->capture_default_str();
    bench_cmd->add_option("--points", bench.points, "Points per timing")->capture_default_str();
    bench_cmd->add_option("--repeats", bench.repeats, "Repetitions (minimum is reported)")->capture_default_str();
    bench_cmd->add_option("--seed", bench.seed, "Seed")->capture_default_str();
    bench_cmd->add_option("--brute-mode", brute_mode, "dense | scalar")->capture_default_str();
    bench_cmd->add_option("--step-methods", step_methods, "Also time training steps of these methods");
    bench_cmd->add_option("--step-count", step_count, "Timed training steps per method")->capture_default_str();
    bench_cmd->add_option("--step-out", step_out, "CSV for step timings (default: stdout)");

    std::string field = "sumsq", est = "q4", point, coef = "identity";
    std::size_t d = 2, k = 20;
    double r = 1e-3, eps_fd = 0.0, h = 1e-4;
    std::uint64_t seed = 0;
    bool no_antithetic = false;
    auto* est_cmd = app.add_subcommand("estimate", "Evaluate one divergence estimator against the oracle");
    est_cmd->add_option("--field", field, "sumsq | sinsum | sin1 | linear | const | gauss")->capture_default_str();
    est_cmd->add_option("--est", est, "q1 | q2 | q3 | q4 | q5")->capture_default_str();
    est_cmd->add_option("--d", d, "Dimension")->capture_default_str();
    est_cmd->add_option("--r", r, "Sphere radius")->capture_default_str();
    est_cmd->add_option("--k", k, "Directions")->capture_default_str();
    est_cmd->add_option("--seed", seed, "Seed for directions")->capture_default_str();
    est_cmd->add_option("--point", point, "Evaluation point: one value or d comma-separated (default origin)");
    est_cmd->add_option("--coef", coef, "identity | one-plus-sq")->capture_default_str();
    est_cmd->add_option("--eps-fd", eps_fd, "Difference step for q2 (default r)");
    est_cmd->add_option("--oracle-step", h, "Oracle step")->capture_default_str();
    est_cmd->add_flag("--no-antithetic", no_antithetic, "Independent directions");

    app.add_subcommand("list-problems", "List problems and their defaults");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsageError;
    }

    try {
        if (*train_cmd) return cmd_train(train_flags, train_out, quiet);
        if (*compare_cmd) return cmd_compare(compare_flags, methods, compare_out, parallel);
        if (*bench_cmd) return cmd_bench(bench, dims, arch, brute_mode, step_methods, step_count, step_out);
        if (*est_cmd) {
            return cmd_estimate(field, est, d, r, k, seed, point, coef, !no_antithetic, eps_fd, h);
        }
        return cmd_list_problems();
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRunError;
    }
}
