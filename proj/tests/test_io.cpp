#include "dfvm/io.hpp"
#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

using namespace dfvm;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("dfvm_io_" + std::to_string(::getpid()) + "_" + name);
}

void expect_config_error(const std::string& text, const std::string& fragment) {
    try {
        parse_run_config(text, "run.ini");
        FAIL() << "expected ConfigError for:\n" << text;
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
}

}  // namespace

TEST(Params, RoundTripIsBitExact) {
    for (Architecture kind : {Architecture::Fcnn, Architecture::ResNet}) {
        const ParamSet p = dfvm::testing::random_params({kind, 3, 7, 2}, 1);
        std::stringstream ss;
        write_params(p, ss);
        const ParamSet q = read_params(ss);
        EXPECT_EQ(q.config, p.config);
        EXPECT_EQ(q.values, p.values);
    }
    const ParamSet p = dfvm::testing::random_params({Architecture::ResNet, 2, 4, 1}, 2);
    const fs::path f = temp_file("params.bin");
    save_params(p, f);
    EXPECT_EQ(load_params(f).values, p.values);
    fs::remove(f);
}

TEST(Params, CorruptFilesRejected) {
    const ParamSet p = dfvm::testing::random_params({Architecture::ResNet, 2, 4, 1}, 3);
    std::stringstream ss;
    write_params(p, ss);
    const std::string good = ss.str();

    std::stringstream bad_magic("NOTPARAMS 1\n" + good.substr(good.find('\n') + 1));
    EXPECT_THROW(read_params(bad_magic), std::runtime_error);

    std::stringstream truncated(good.substr(0, good.size() - 8));
    EXPECT_THROW(read_params(truncated), std::runtime_error);

    std::string wrong_width = good;
    const auto pos = wrong_width.find("width 4");
    ASSERT_NE(pos, std::string::npos);
    wrong_width.replace(pos, 7, "width 5");
    std::stringstream ww(wrong_width);
    EXPECT_THROW(read_params(ww), std::runtime_error);

    EXPECT_THROW(load_params(temp_file("missing.bin")), std::runtime_error);
}

TEST(Metrics, HeaderAndFormatting) {
    EXPECT_EQ(metrics_header(), "step,loss,interior,boundary,re,re0,seconds");
    MetricsRow r{12, 1.0 / 3.0, 0.25, 1e-12, 0.0123456789012, std::nan(""), 2.5};
    EXPECT_EQ(format_metrics_row(r), "12,0.3333333333,0.25,1e-12,0.0123456789,,2.5");
    r.re_initial = 0.5;
    EXPECT_EQ(format_metrics_row(r), "12,0.3333333333,0.25,1e-12,0.0123456789,0.5,2.5");
}

TEST(Metrics, WriteThenParse) {
    const std::vector<MetricsRow> rows{{0, 2.0, 1.5, 0.5, 1.0, std::nan(""), 0.0},
                                       {500, 0.125, 0.1, 0.025, 0.03, std::nan(""), 12.75}};
    const fs::path f = temp_file("metrics.csv");
    write_metrics_csv(rows, f);
    const std::vector<MetricsRow> back = read_metrics_csv(f);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].step, 500u);
    EXPECT_EQ(back[1].loss, 0.125);
    EXPECT_TRUE(std::isnan(back[1].re_initial));
    EXPECT_EQ(back[1].seconds, 12.75);
    fs::remove(f);
}

TEST(Metrics, MalformedFilesRejected) {
    const fs::path f = temp_file("bad.csv");
    {
        std::ofstream o(f);
        o << "step,loss\n0,1\n";
    }
    EXPECT_THROW(read_metrics_csv(f), std::runtime_error);
    {
        std::ofstream o(f);
        o << metrics_header() << "\n0,1,2\n";
    }
    EXPECT_THROW(read_metrics_csv(f), std::runtime_error);
    {
        std::ofstream o(f);
        o << metrics_header() << "\n0,abc,1,1,1,,1\n";
    }
    EXPECT_THROW(read_metrics_csv(f), std::runtime_error);
    fs::remove(f);
}

TEST(Config, ParsesSectionsAndComments) {
    const RunConfig c = parse_run_config(
        "# comment\n"
        "[problem]\n"
        "name = poisson-hd\n"
        "dim = 10   \n"
        "; another comment\n"
        "[method]\n"
        "name = dfvm-sphere\n"
        "[loss]\n"
        "eps = 2e-3\n"
        "k =\n"
        "lower_order = cv-average\n"
        "[train]\n"
        "steps = 300\n"
        "seed = 9\n");
    EXPECT_EQ(c.problem, "poisson-hd");
    EXPECT_EQ(c.dim, 10u);
    EXPECT_EQ(c.method, Method::DfvmSphere);
    EXPECT_EQ(c.eps, 2e-3);
    EXPECT_FALSE(c.k.has_value());
    EXPECT_EQ(c.lower_order, LowerOrderRule::CvAverage);
    EXPECT_EQ(c.steps, 300u);
    EXPECT_EQ(c.seed, 9u);
    const RunConfig r = c.resolved();
    EXPECT_EQ(r.k, 20u);
    EXPECT_EQ(r.width, 128u);
    EXPECT_EQ(r.boundary_points, 1000u);
}

TEST(Config, ErrorsNameTheLineAndKey) {
    expect_config_error("[problem]\nname = poisson-hd\n[train]\nstpes = 3\n", "run.ini:4");
    expect_config_error("[problem]\nname = poisson-hd\n[train]\nstpes = 3\n", "train.stpes");
    expect_config_error("[train]\nsteps = many\n", "train.steps");
    expect_config_error("[train]\nsteps = -3\n", "train.steps");
    expect_config_error("[train]\nlr = 1e-3x\n", "train.lr");
    expect_config_error("[method]\nname = fem\n", "method.name");
    expect_config_error("[train]\nsteps = 3\nsteps = 4\n", "duplicate");
    expect_config_error("[train\n", "run.ini:1");
    expect_config_error("[train]\nsteps\n", "run.ini:2");
}

TEST(Config, ProblemIsRequiredAndChecked) {
    RunConfig c;
    try {
        c.resolved();
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("problem.name"), std::string::npos);
    }
    c.problem = "heat";
    EXPECT_THROW(c.resolved(), ConfigError);
}

TEST(Config, EveryKeySettable) {
    RunConfig c;
    for (const std::string& key : option_keys()) {
        EXPECT_NE(key.find('.'), std::string::npos) << key;
    }
    EXPECT_THROW(set_option(c, "train.nonsense", "1"), ConfigError);
    set_option(c, "loss.antithetic", "false");
    EXPECT_FALSE(c.antithetic);
    EXPECT_THROW(set_option(c, "loss.antithetic", "maybe"), ConfigError);
}

TEST(Config, ResolvedEchoRoundTrips) {
    RunConfig c;
    c.problem = "black-scholes";
    c.method = Method::Pinn;
    c.lr = 1.0 / 3.0;
    c.lambda = 0.1;
    c.seed = 123456789012345ULL;
    c.output_dir = "runs/x";
    const std::string ini = to_ini(c);
    const RunConfig back = parse_run_config(ini);
    EXPECT_EQ(to_ini(back), ini);
    EXPECT_EQ(back.lr, c.lr);
    EXPECT_EQ(back.seed, c.seed);
    EXPECT_EQ(back.network(), c.resolved().network());
    EXPECT_EQ(back.train().interior_points, 1000u);
    // Every option appears in the echo.
    for (const std::string& key : option_keys()) {
        EXPECT_NE(ini.find(key.substr(key.find('.') + 1) + " = "), std::string::npos) << key;
    }
}

TEST(Config, DerivedObjects) {
    RunConfig c;
    c.problem = "poisson-lshape";
    c.method = Method::DfvmSphere;
    c.eps = 5e-3;
    c.steps = 77;
    const LossConfig l = c.loss();
    EXPECT_EQ(l.cv.shape, CvShape::Sphere);
    EXPECT_EQ(l.cv.k, 20u);
    EXPECT_EQ(l.cv.radius, 5e-3);
    EXPECT_EQ(c.train().steps, 77u);
    EXPECT_EQ(c.network().width, 40u);
    EXPECT_EQ(c.network().input_dim, 2u);
}
