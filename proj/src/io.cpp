#include "dfvm/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace dfvm {

namespace {

constexpr const char* kParamsMagic = "DFVMPARAMS";
constexpr int kParamsVersion = 1;

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string format_metric(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
        throw ConfigError(key + ": expected a number, got '" + text + "'");
    }
    return v;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

template <typename F>
auto wrap(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

struct Option {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename T>
std::string opt_text(const std::optional<T>& v, std::string (*f)(T)) {
    return v ? f(*v) : "";
}

std::string size_text(std::size_t v) { return std::to_string(v); }
std::string bool_text(bool v) { return v ? "true" : "false"; }

// Ordered so that to_ini groups keys by section.
const std::vector<std::pair<std::string, Option>>& options() {
    using C = RunConfig;
    using S = const std::string&;
    static const std::vector<std::pair<std::string, Option>> table = {
        {"problem.name", {[](C& c, S, S v) { c.problem = trim(v); }, [](const C& c) { return c.problem; }}},
        {"problem.dim", {[](C& c, S k, S v) { c.dim = parse_unsigned(k, v); },
                         [](const C& c) { return size_text(c.dim); }}},
        {"problem.horizon", {[](C& c, S k, S v) { c.horizon = parse_double(k, v); },
                             [](const C& c) { return format_double(c.horizon); }}},
        {"method.name", {[](C& c, S k, S v) { c.method = wrap(k, [&] { return parse_method(trim(v)); }); },
                         [](const C& c) { return to_string(c.method); }}},
        {"network.kind",
         {[](C& c, S k, S v) { c.architecture = wrap(k, [&] { return parse_architecture(trim(v)); }); },
          [](const C& c) { return to_string(c.architecture); }}},
        {"network.width", {[](C& c, S k, S v) { c.width = parse_unsigned(k, v); },
                           [](const C& c) { return opt_text<std::size_t>(c.width, size_text); }}},
        {"network.depth", {[](C& c, S k, S v) { c.depth = parse_unsigned(k, v); },
                           [](const C& c) { return size_text(c.depth); }}},
        {"loss.eps", {[](C& c, S k, S v) { c.eps = parse_double(k, v); },
                      [](const C& c) { return opt_text<double>(c.eps, format_double); }}},
        {"loss.k", {[](C& c, S k, S v) { c.k = parse_unsigned(k, v); },
                    [](const C& c) { return opt_text<std::size_t>(c.k, size_text); }}},
        {"loss.lambda", {[](C& c, S k, S v) { c.lambda = parse_double(k, v); },
                         [](const C& c) { return format_double(c.lambda); }}},
        {"loss.lower_order",
         {[](C& c, S k, S v) { c.lower_order = wrap(k, [&] { return parse_lower_order_rule(trim(v)); }); },
          [](const C& c) { return to_string(c.lower_order); }}},
        {"loss.estimator",
         {[](C& c, S k, S v) { c.estimator = wrap(k, [&] { return parse_flux_estimator(trim(v)); }); },
          [](const C& c) { return to_string(c.estimator); }}},
        {"loss.difference_step", {[](C& c, S k, S v) { c.difference_step = parse_double(k, v); },
                                  [](const C& c) { return format_double(c.difference_step); }}},
        {"loss.pinn_step", {[](C& c, S k, S v) { c.pinn_step = parse_double(k, v); },
                            [](const C& c) { return format_double(c.pinn_step); }}},
        {"loss.antithetic", {[](C& c, S k, S v) { c.antithetic = parse_bool(k, v); },
                             [](const C& c) { return bool_text(c.antithetic); }}},
        {"loss.qmc", {[](C& c, S k, S v) { c.qmc = parse_bool(k, v); },
                      [](const C& c) { return bool_text(c.qmc); }}},
        {"train.steps", {[](C& c, S k, S v) { c.steps = parse_unsigned(k, v); },
                         [](const C& c) { return size_text(c.steps); }}},
        {"train.lr", {[](C& c, S k, S v) { c.lr = parse_double(k, v); },
                      [](const C& c) { return format_double(c.lr); }}},
        {"train.lr_decay", {[](C& c, S k, S v) { c.lr_decay = parse_double(k, v); },
                            [](const C& c) { return format_double(c.lr_decay); }}},
        {"train.decay_steps", {[](C& c, S k, S v) { c.decay_steps = parse_unsigned(k, v); },
                               [](const C& c) { return size_text(c.decay_steps); }}},
        {"train.beta1", {[](C& c, S k, S v) { c.beta1 = parse_double(k, v); },
                         [](const C& c) { return format_double(c.beta1); }}},
        {"train.beta2", {[](C& c, S k, S v) { c.beta2 = parse_double(k, v); },
                         [](const C& c) { return format_double(c.beta2); }}},
        {"train.adam_eps", {[](C& c, S k, S v) { c.adam_eps = parse_double(k, v); },
                            [](const C& c) { return format_double(c.adam_eps); }}},
        {"train.interior_points", {[](C& c, S k, S v) { c.interior_points = parse_unsigned(k, v); },
                                   [](const C& c) { return opt_text<std::size_t>(c.interior_points, size_text); }}},
        {"train.boundary_points", {[](C& c, S k, S v) { c.boundary_points = parse_unsigned(k, v); },
                                   [](const C& c) { return opt_text<std::size_t>(c.boundary_points, size_text); }}},
        {"train.resample", {[](C& c, S k, S v) { c.resample = parse_bool(k, v); },
                            [](const C& c) { return bool_text(c.resample); }}},
        {"train.eval_every", {[](C& c, S k, S v) { c.eval_every = parse_unsigned(k, v); },
                              [](const C& c) { return size_text(c.eval_every); }}},
        {"train.eval_points", {[](C& c, S k, S v) { c.eval_points = parse_unsigned(k, v); },
                               [](const C& c) { return size_text(c.eval_points); }}},
        {"train.eval_points_initial", {[](C& c, S k, S v) { c.eval_points_initial = parse_unsigned(k, v); },
                                       [](const C& c) { return size_text(c.eval_points_initial); }}},
        {"train.seed", {[](C& c, S k, S v) { c.seed = parse_unsigned(k, v); },
                        [](const C& c) { return std::to_string(c.seed); }}},
        {"output.dir", {[](C& c, S, S v) { c.output_dir = trim(v); }, [](const C& c) { return c.output_dir; }}},
    };
    return table;
}

const Option* find_option(const std::string& key) {
    for (const auto& [k, opt] : options()) {
        if (k == key) return &opt;
    }
    return nullptr;
}

}  // namespace

// ---- parameters ----

void write_params(const ParamSet& params, std::ostream& out) {
    const NetworkConfig& c = params.config;
    out << kParamsMagic << ' ' << kParamsVersion << '\n'
        << "kind " << to_string(c.kind) << '\n'
        << "input_dim " << c.input_dim << '\n'
        << "width " << c.width << '\n'
        << "depth " << c.depth << '\n'
        << "count " << params.values.size() << '\n';
    for (const LayerShape& l : params.layout.layers()) out << "layer " << l.out << ' ' << l.in << '\n';
    out << "end\n";
    std::vector<char> buf(params.values.size() * 8);
    for (std::size_t i = 0; i < params.values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(params.values[i]);
        for (int b = 0; b < 8; ++b) buf[i * 8 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("failed to write parameters");
}

void save_params(const ParamSet& params, const std::filesystem::path& path) {
    // Write-then-rename so a crash never leaves a truncated checkpoint.
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        write_params(params, out);
    }
    std::filesystem::rename(tmp, path);
}

ParamSet read_params(std::istream& in) {
    auto fail = [](const std::string& what) { throw std::runtime_error("parameter file: " + what); };
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != kParamsMagic) fail("bad magic");
    if (version != kParamsVersion) fail("unsupported version " + std::to_string(version));
    NetworkConfig cfg;
    std::size_t count = 0;
    std::vector<std::pair<std::size_t, std::size_t>> layers;
    std::string word;
    while (in >> word && word != "end") {
        if (word == "kind") {
            std::string k;
            in >> k;
            cfg.kind = parse_architecture(k);
        } else if (word == "input_dim") {
            in >> cfg.input_dim;
        } else if (word == "width") {
            in >> cfg.width;
        } else if (word == "depth") {
            in >> cfg.depth;
        } else if (word == "count") {
            in >> count;
        } else if (word == "layer") {
            std::size_t o = 0, i = 0;
            in >> o >> i;
            layers.emplace_back(o, i);
        } else {
            fail("unknown header field '" + word + "'");
        }
        if (!in) fail("truncated header");
    }
    if (word != "end") fail("missing end of header");
    in.get();  // the newline after "end"
    cfg.validate();
    ParamSet params = ParamSet::zeros(cfg);
    if (count != params.size()) {
        fail("count " + std::to_string(count) + " does not match the architecture (" +
             std::to_string(params.size()) + ")");
    }
    const auto& expected = params.layout.layers();
    if (layers.size() != expected.size()) fail("layer table does not match the architecture");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].first != expected[l].out || layers[l].second != expected[l].in) {
            fail("layer " + std::to_string(l) + " shape does not match the architecture");
        }
    }
    std::vector<char> buf(count * 8);
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) fail("truncated data");
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i * 8 + static_cast<std::size_t>(b)]))
                    << (8 * b);
        }
        params.values[i] = std::bit_cast<double>(bits);
    }
    return params;
}

ParamSet load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_params(in);
}

// ---- metrics ----

std::string metrics_header() { return "step,loss,interior,boundary,re,re0,seconds"; }

std::string format_metrics_row(const MetricsRow& r) {
    return std::to_string(r.step) + ',' + format_metric(r.loss) + ',' + format_metric(r.interior) + ',' +
           format_metric(r.boundary) + ',' + format_metric(r.re) + ',' + format_metric(r.re_initial) + ',' +
           format_metric(r.seconds);
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, std::ostream& out) {
    out << metrics_header() << '\n';
    for (const MetricsRow& r : rows) out << format_metrics_row(r) << '\n';
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_metrics_csv(rows, out);
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (trim(line) != metrics_header()) throw std::runtime_error(path.string() + ": unexpected header");
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() == 6) cells.emplace_back();
        if (cells.size() != 7) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
        auto num = [&](std::size_t i) {
            return cells[i].empty() ? std::nan("") : parse_double("metrics", cells[i]);
        };
        MetricsRow r;
        r.step = parse_unsigned("metrics", cells[0]);
        r.loss = num(1);
        r.interior = num(2);
        r.boundary = num(3);
        r.re = num(4);
        r.re_initial = num(5);
        r.seconds = num(6);
        rows.push_back(r);
    }
    return rows;
}

// ---- run configuration ----

void set_option(RunConfig& config, const std::string& key, const std::string& value) {
    const Option* opt = find_option(key);
    if (!opt) throw ConfigError("unknown key '" + key + "'");
    opt->set(config, key, value);
}

std::vector<std::string> option_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, opt] : options()) keys.push_back(k);
    return keys;
}

RunConfig parse_run_config(const std::string& text, const std::string& source) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    std::map<std::string, std::size_t> seen;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = source + ":" + std::to_string(lineno) + ": ";
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError(where + "unterminated section header");
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
        const std::string name = trim(t.substr(0, eq));
        const std::string key = section.empty() ? name : section + "." + name;
        if (auto it = seen.find(key); it != seen.end()) {
            throw ConfigError(where + "duplicate key '" + key + "' (first set on line " +
                              std::to_string(it->second) + ")");
        }
        seen.emplace(key, lineno);
        std::string value = trim(t.substr(eq + 1));
        if (value.empty()) continue;  // unset optional
        try {
            set_option(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), path.string());
}

std::string to_ini(const RunConfig& config) {
    const RunConfig r = config.resolved();
    std::string out, section;
    for (const auto& [key, opt] : options()) {
        const auto dot = key.find('.');
        const std::string sec = key.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) out += '\n';
            out += "[" + sec + "]\n";
            section = sec;
        }
        out += key.substr(dot + 1) + " = " + opt.get(r) + "\n";
    }
    return out;
}

RunConfig RunConfig::resolved() const {
    const PdeProblem p = make_problem();
    RunConfig r = *this;
    if (!r.width) r.width = p.default_width;
    if (!r.eps) r.eps = p.default_eps;
    if (!r.k) r.k = method == Method::DfvmSphere ? 20 : 1;
    if (!r.interior_points) r.interior_points = p.default_interior;
    if (!r.boundary_points) r.boundary_points = p.default_boundary;
    return r;
}

PdeProblem RunConfig::make_problem() const {
    if (problem.empty()) throw ConfigError("problem.name: required (one of poisson-hd, poisson-lshape, nonlinear, black-scholes)");
    try {
        return dfvm::make_problem(problem, dim, horizon);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("problem.name: ") + e.what());
    }
}

NetworkConfig RunConfig::network() const {
    const RunConfig r = resolved();
    NetworkConfig n;
    n.kind = architecture;
    n.input_dim = make_problem().input_dim();
    n.width = *r.width;
    n.depth = depth;
    n.validate();
    return n;
}

LossConfig RunConfig::loss() const {
    const RunConfig r = resolved();
    LossConfig l = LossConfig::for_method(method, *r.eps);
    l.cv.k = *r.k;
    l.cv.antithetic = antithetic;
    l.cv.qmc = qmc;
    l.lambda = lambda;
    l.lower_order = lower_order;
    l.estimator = estimator;
    l.difference_step = difference_step;
    l.pinn_step = pinn_step;
    l.validate();
    return l;
}

TrainConfig RunConfig::train() const {
    const RunConfig r = resolved();
    TrainConfig t;
    t.steps = steps;
    t.lr = lr;
    t.lr_decay = lr_decay;
    t.decay_steps = decay_steps;
    t.adam = {beta1, beta2, adam_eps};
    t.interior_points = *r.interior_points;
    t.boundary_points = *r.boundary_points;
    t.resample = resample;
    t.eval_every = eval_every;
    t.eval_points = eval_points;
    t.eval_points_initial = eval_points_initial;
    t.seed = seed;
    t.validate();
    return t;
}

}  // namespace dfvm
