// balancekit command-line driver.
//
// Exit codes: 0 success, 1 usage or I/O error, 2 non-convergence or
// divergence.

#include "balancekit/approximator.hpp"
#include "balancekit/balancing.hpp"
#include "balancekit/builders.hpp"
#include "balancekit/dataset.hpp"
#include "balancekit/error.hpp"
#include "balancekit/manifold.hpp"
#include "balancekit/network_io.hpp"
#include "balancekit/training.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace balancekit;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kNotConverged = 2;

constexpr double kUniquenessTol = 1e-6;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::optional<std::uint64_t> env_seed() {
    const char* v = std::getenv("BALANCEKIT_SEED");
    if (!v || !*v) return std::nullopt;
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw UsageError(fmt::format("BALANCEKIT_SEED is not an unsigned integer: '{}'", v));
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    out << text;
    if (!out) throw std::runtime_error(fmt::format("error writing {}", path.string()));
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

void prepare_out(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
}

void write_manifest(const fs::path& dir, const std::string& command, json config, std::vector<std::string> argv) {
    json m;
    m["tool"] = "balancekit";
    m["version"] = "0.1.0";
    m["command"] = command;
    m["argv"] = std::move(argv);
    m["config"] = std::move(config);
    write_json(dir / "manifest.json", m);
}

Schedule parse_schedule(const std::string& text, const StopCriteria& stop, std::uint64_t default_seed) {
    if (text == "sequential") return Schedule::sequential({}, stop);
    if (text == "layer") return Schedule::layer_independent({}, stop);
    if (text == "layer-tied") return Schedule::layer_tied({}, stop);
    if (text == "partial") return Schedule::partial_pass(stop);
    if (text == "stochastic") return Schedule::stochastic(default_seed, stop);
    if (text.rfind("stochastic:", 0) == 0) {
        const std::string s = text.substr(11);
        try {
            std::size_t used = 0;
            const auto seed = std::stoull(s, &used);
            if (used == s.size()) return Schedule::stochastic(seed, stop);
        } catch (const std::exception&) {
        }
        throw UsageError(fmt::format("bad stochastic seed '{}' in schedule", s));
    }
    throw UsageError(fmt::format("unknown schedule '{}' (expected stochastic:<seed>, sequential, layer, layer-tied or partial)", text));
}

json schedule_json(const Schedule& s) {
    static const std::map<ScheduleKind, const char*> names{{ScheduleKind::Stochastic, "stochastic"},
                                                           {ScheduleKind::Sequential, "sequential"},
                                                           {ScheduleKind::LayerIndependent, "layer"},
                                                           {ScheduleKind::LayerTied, "layer-tied"},
                                                           {ScheduleKind::PartialPass, "partial"}};
    json j{{"kind", names.at(s.kind)}, {"deficit_tol", s.stop.deficit_tol}, {"max_steps", s.stop.max_steps}};
    if (s.kind == ScheduleKind::Stochastic) j["seed"] = s.seed;
    return j;
}

// balance -------------------------------------------------------------------

struct BalanceArgs {
    std::string net;
    std::string cost = "l2";
    std::string schedule = "stochastic";
    double tol = 1e-8;
    std::size_t max_steps = 1'000'000;
    std::string out = "balance_out";
    bool allow_nonhomogeneous = false;
};

int cmd_balance(const BalanceArgs& a, const std::vector<std::string>& argv) {
    const CostSpec cost = CostSpec::parse(a.cost);
    const Schedule schedule = parse_schedule(a.schedule, {a.tol, a.max_steps}, env_seed().value_or(0));
    const Network net = load_network(a.net);
    require_valid(net);
    const fs::path out(a.out);
    prepare_out(out);
    write_manifest(out, "balance",
                   {{"net", a.net}, {"cost", cost.to_string()}, {"schedule", schedule_json(schedule)},
                    {"allow_nonhomogeneous", a.allow_nonhomogeneous}},
                   argv);

    const BalanceOptions options{a.allow_nonhomogeneous};
    const auto [balanced, trace] = run_balancing(net, schedule, cost, options);
    save_network(balanced, out / "balanced.json");
    {
        std::ofstream csv(out / "trace.csv");
        write_trace_csv(trace, csv);
    }
    const double r_after = network_cost(balanced, cost);
    const json summary{{"r_before", trace.r_initial},
                       {"r_after", r_after},
                       {"steps", trace.steps.size()},
                       {"productive_steps", trace.productive_steps()},
                       {"initial_deficit", trace.deficit_initial},
                       {"final_deficit", network_deficit(balanced, cost, options)},
                       {"converged", trace.converged}};
    write_json(out / "summary.json", summary);
    fmt::print("r_before {:.17g}\nr_after {:.17g}\nsteps {} ({} productive)\nfinal_deficit {:.6g}\nconverged {}\n",
               trace.r_initial, r_after, trace.steps.size(), trace.productive_steps(),
               summary["final_deficit"].get<double>(), trace.converged);
    if (!trace.converged) {
        std::cerr << fmt::format("balancing did not converge within {} steps\n", a.max_steps);
        return kNotConverged;
    }
    return kOk;
}

// verify-uniqueness ---------------------------------------------------------

struct UniquenessArgs {
    std::string net;
    std::string cost = "l2";
    std::size_t schedules = 10;
    std::string seeds;
    double tol = 1e-24;
    std::size_t max_steps = 10'000'000;
    std::string out = "uniqueness_out";
};

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            seeds.push_back(std::stoull(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError(fmt::format("bad seed '{}' in --seeds", item));
        }
    }
    if (seeds.empty()) throw UsageError("--seeds is empty");
    return seeds;
}

int cmd_verify_uniqueness(const UniquenessArgs& a, const std::vector<std::string>& argv) {
    const CostSpec cost = CostSpec::parse(a.cost);
    if (!cost.single_term()) throw UsageError("verify-uniqueness needs a single-term cost for the convex oracle");
    std::vector<std::uint64_t> seeds;
    if (!a.seeds.empty()) {
        seeds = parse_seeds(a.seeds);
    } else {
        if (a.schedules < 2) throw UsageError("--schedules must be at least 2");
        const std::uint64_t base = env_seed().value_or(0);
        for (std::size_t k = 0; k < a.schedules; ++k) seeds.push_back(base + k);
    }
    const Network net = load_network(a.net);
    require_valid(net);
    const fs::path out(a.out);
    prepare_out(out);
    write_manifest(out, "verify-uniqueness",
                   {{"net", a.net}, {"cost", cost.to_string()}, {"seeds", seeds}, {"deficit_tol", a.tol},
                    {"max_steps", a.max_steps}},
                   argv);

    bool any_balanceable = false;
    for (UnitId u : net.hidden_units()) any_balanceable = any_balanceable || net.is_balanceable(u);
    if (!any_balanceable) {
        const json report{{"note", "network has no balanceable hidden units; nothing to balance"},
                          {"max_pairwise_discrepancy", 0.0},
                          {"max_oracle_discrepancy", 0.0}};
        write_json(out / "report.json", report);
        fmt::print("nothing to balance: the network has no balanceable hidden units\n");
        return kOk;
    }

    const ConvexSolution oracle = solve_convex(net, cost);
    write_json(out / "oracle.json", oracle_report(oracle));
    const auto oracle_w = oracle.balanced.weights();

    std::vector<std::vector<double>> finals;
    double worst_oracle = 0.0;
    for (std::uint64_t seed : seeds) {
        const auto [balanced, trace] = run_balancing(net, Schedule::stochastic(seed, {a.tol, a.max_steps}), cost);
        if (!trace.converged) {
            std::cerr << fmt::format("stochastic run with seed {} did not converge within {} steps\n", seed, a.max_steps);
            write_json(out / "report.json", {{"nonconverged_seed", seed}});
            return kNotConverged;
        }
        auto w = balanced.weights();
        for (std::size_t e = 0; e < w.size(); ++e) worst_oracle = std::max(worst_oracle, std::fabs(w[e] - oracle_w[e]));
        finals.push_back(std::move(w));
    }
    double worst_pair = 0.0;
    for (std::size_t i = 0; i < finals.size(); ++i) {
        for (std::size_t j = i + 1; j < finals.size(); ++j) {
            for (std::size_t e = 0; e < finals[i].size(); ++e) {
                worst_pair = std::max(worst_pair, std::fabs(finals[i][e] - finals[j][e]));
            }
        }
    }
    const bool ok = worst_pair < kUniquenessTol && worst_oracle < kUniquenessTol;
    write_json(out / "report.json", {{"runs", seeds.size()},
                                     {"max_pairwise_discrepancy", worst_pair},
                                     {"max_oracle_discrepancy", worst_oracle},
                                     {"r_star", oracle.r_star},
                                     {"tolerance", kUniquenessTol},
                                     {"unique", ok}});
    fmt::print("runs {}\nmax_pairwise_discrepancy {:.3g}\nmax_oracle_discrepancy {:.3g}\n", seeds.size(), worst_pair,
               worst_oracle);
    return ok ? kOk : kNotConverged;
}

// train ---------------------------------------------------------------------

ActivationSpec activation_by_name(const std::string& name) {
    if (name == "relu") return ActivationSpec::relu();
    if (name == "identity" || name == "linear") return ActivationSpec::identity();
    if (name == "tanh") return ActivationSpec::tanh();
    if (name == "logistic") return ActivationSpec::logistic();
    if (name.rfind("leaky_relu:", 0) == 0) return ActivationSpec::leaky_relu(std::stod(name.substr(11)));
    throw UsageError(fmt::format("unknown activation '{}'", name));
}

LossKind loss_by_name(const std::string& name) {
    if (name == "squared_error") return LossKind::SquaredError;
    if (name == "cross_entropy") return LossKind::CrossEntropy;
    if (name == "binary_cross_entropy") return LossKind::BinaryCrossEntropy;
    throw UsageError(fmt::format("unknown loss '{}'", name));
}

BalanceMode mode_by_name(const std::string& name) {
    if (name == "none") return BalanceMode::None;
    if (name == "full_at_start") return BalanceMode::FullAtStart;
    if (name == "partial_each_epoch") return BalanceMode::PartialEachEpoch;
    if (name == "full_each_epoch") return BalanceMode::FullEachEpoch;
    throw UsageError(fmt::format("unknown balance_mode '{}'", name));
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

Dataset load_dataset(const json& spec, const fs::path& base) {
    const std::string kind = spec.at("kind").get<std::string>();
    if (kind == "circles") {
        return make_concentric_circles(spec.at("n").get<std::size_t>(), spec.value("noise", 0.05),
                                       spec.value("seed", std::uint64_t{0}));
    }
    Dataset d;
    if (kind == "csv") {
        CsvSchema schema;
        schema.label_column = spec.value("label_column", schema.label_column);
        schema.has_header = spec.value("has_header", true);
        schema.label_index = spec.value("label_index", std::size_t{0});
        d = load_csv(resolve(base, spec.at("path").get<std::string>()), schema);
    } else if (kind == "idx") {
        std::optional<fs::path> labels;
        if (spec.contains("labels")) labels = resolve(base, spec.at("labels").get<std::string>());
        d = load_idx(resolve(base, spec.at("images").get<std::string>()), labels);
    } else {
        throw UsageError(fmt::format("unknown dataset kind '{}'", kind));
    }
    if (spec.contains("fraction")) {
        d = stratified_subsample(d, spec.at("fraction").get<double>(), spec.value("subsample_seed", std::uint64_t{0}));
    }
    return d;
}

Network initial_network(const json& spec, const fs::path& base, std::uint64_t seed) {
    if (spec.is_string()) return load_network(resolve(base, spec.get<std::string>()));
    LayeredSpec layered;
    layered.sizes = spec.at("sizes").get<std::vector<std::size_t>>();
    const ActivationSpec hidden = activation_by_name(spec.value("hidden", std::string("relu")));
    layered.hidden_activation = [hidden](std::size_t, std::size_t) { return hidden; };
    layered.output_activation = activation_by_name(spec.value("output", std::string("identity")));
    layered.bias = spec.value("bias", true);
    Rng rng(seed);
    return make_layered_network(layered, rng);
}

struct TrainArgs {
    std::string config;
    std::string out;
    std::string seeds;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv) {
    const fs::path config_path(a.config);
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error(fmt::format("cannot read {}", config_path.string()));
    json cfg;
    try {
        cfg = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(fmt::format("{}: {}", config_path.string(), e.what()), e.byte);
    }
    const fs::path base = config_path.parent_path();

    TrainConfig tc;
    tc.learning_rate = cfg.value("learning_rate", tc.learning_rate);
    tc.batch_size = cfg.value("batch_size", tc.batch_size);
    tc.epochs = cfg.value("epochs", tc.epochs);
    tc.loss = loss_by_name(cfg.value("loss", std::string("binary_cross_entropy")));
    if (cfg.contains("cost") && !cfg.at("cost").is_null()) tc.cost = CostSpec::parse(cfg.at("cost").get<std::string>());
    tc.balance_cost = CostSpec::parse(cfg.value("balance_cost", std::string("l2")));
    tc.balance_tol = cfg.value("balance_tol", tc.balance_tol);

    std::vector<std::string> modes;
    if (cfg.contains("balance_modes")) modes = cfg.at("balance_modes").get<std::vector<std::string>>();
    else modes.push_back(cfg.value("balance_mode", std::string("none")));
    for (const auto& m : modes) (void)mode_by_name(m);

    std::vector<std::uint64_t> seeds;
    if (!a.seeds.empty()) seeds = parse_seeds(a.seeds);
    else if (cfg.contains("seeds")) seeds = cfg.at("seeds").get<std::vector<std::uint64_t>>();
    else seeds.push_back(cfg.value("seed", std::uint64_t{0}));
    if (const auto s = env_seed()) seeds = {*s};

    const Dataset train = load_dataset(cfg.at("train"), base);
    const Dataset test = cfg.contains("test") ? load_dataset(cfg.at("test"), base) : train;

    const fs::path out = a.out.empty() ? fs::path(cfg.value("out", std::string("train_out"))) : fs::path(a.out);
    prepare_out(out);
    json resolved = cfg;
    resolved.erase("seed");
    resolved.erase("balance_mode");
    resolved["seeds"] = seeds;
    resolved["balance_modes"] = modes;
    resolved["config_path"] = fs::absolute(config_path).string();
    write_manifest(out, "train", resolved, argv);

    const bool sweep = seeds.size() > 1 || modes.size() > 1;
    bool diverged = false;
    std::map<std::string, std::vector<std::vector<MetricsRow>>> by_mode;
    for (const std::string& mode : modes) {
        for (std::uint64_t seed : seeds) {
            TrainConfig run = tc;
            run.balance_mode = mode_by_name(mode);
            run.seed = seed;
            const Network init = initial_network(cfg.at("network"), base, seed);
            const TrainResult result = sgd_train(init, train, test, run);
            const fs::path dir = sweep ? out / mode / fmt::format("seed_{}", seed) : out;
            prepare_out(dir);
            {
                std::ofstream csv(dir / "metrics.csv");
                write_metrics_csv(result.metrics, csv);
            }
            save_network(result.net, dir / "network.json");
            const auto& last = result.metrics.back();
            fmt::print("{} seed {}: epochs {}, train_loss {:.6g}, test_accuracy {:.4f}, deficit {:.4g}{}\n", mode, seed,
                       last.epoch, last.train_loss, last.test_accuracy, last.network_deficit,
                       result.diverged ? " (diverged)" : "");
            diverged = diverged || result.diverged;
            by_mode[mode].push_back(result.metrics);
        }
    }

    if (sweep) {
        std::ofstream agg(out / "aggregate.csv");
        agg << "arm,epoch,runs,train_loss_mean,train_loss_std,test_accuracy_mean,test_accuracy_std,"
               "deficit_mean,deficit_std,frobenius_norm_mean,frobenius_norm_std\n";
        for (const std::string& mode : modes) {
            const auto& runs = by_mode[mode];
            std::size_t epochs = runs.front().size();
            for (const auto& r : runs) epochs = std::min(epochs, r.size());
            for (std::size_t e = 0; e < epochs; ++e) {
                const auto stat = [&](auto field) {
                    double mean = 0.0, sq = 0.0;
                    for (const auto& r : runs) mean += field(r[e]);
                    mean /= static_cast<double>(runs.size());
                    for (const auto& r : runs) sq += (field(r[e]) - mean) * (field(r[e]) - mean);
                    const double sd = runs.size() > 1 ? std::sqrt(sq / static_cast<double>(runs.size() - 1)) : 0.0;
                    return fmt::format("{:.17g},{:.17g}", mean, sd);
                };
                agg << fmt::format("{},{},{},{},{},{},{}\n", mode, runs.front()[e].epoch, runs.size(),
                                   stat([](const MetricsRow& m) { return m.train_loss; }),
                                   stat([](const MetricsRow& m) { return m.test_accuracy; }),
                                   stat([](const MetricsRow& m) { return m.network_deficit; }),
                                   stat([](const MetricsRow& m) { return m.frobenius_norm; }));
            }
        }
    }
    if (diverged) {
        std::cerr << "training diverged (non-finite loss); partial metrics were written\n";
        return kNotConverged;
    }
    return kOk;
}

// approx --------------------------------------------------------------------

struct ApproxArgs {
    std::string samples;
    double epsilon = 0.1;
    int n = 0;
    std::size_t grid = 10000;
    std::string out = "approx_out";
};

std::vector<std::pair<double, double>> read_samples(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot read {}", path.string()));
    std::vector<std::pair<double, double>> s;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto comma = line.find(',');
        try {
            if (comma == std::string::npos) throw std::invalid_argument("missing comma");
            s.emplace_back(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
        } catch (const std::exception&) {
            if (line_no == 1) continue;  // header
            throw ParseError(fmt::format("{}:{}: expected 'x,y'", path.string(), line_no), line_no);
        }
    }
    return s;
}

int cmd_approx(const ApproxArgs& a, const std::vector<std::string>& argv) {
    const auto samples = read_samples(a.samples);
    if (a.n > 0 && samples.size() != static_cast<std::size_t>(a.n) + 1) {
        throw InvalidArgument(fmt::format("expected {} samples for N = {}, found {}", a.n + 1, a.n, samples.size()));
    }
    const Approximation approx = construct_universal_approximator(samples, a.epsilon);
    const fs::path out(a.out);
    prepare_out(out);
    write_manifest(out, "approx", {{"samples", a.samples}, {"epsilon", a.epsilon}, {"grid", a.grid}}, argv);
    save_network(approx.net, out / "network.json");

    const std::size_t n = samples.size() - 1;
    double worst = 0.0;
    for (std::size_t k = 0; k <= a.grid; ++k) {
        const double x = static_cast<double>(k) / static_cast<double>(a.grid);
        const std::size_t slice = std::min(n - 1, static_cast<std::size_t>(x * static_cast<double>(n)));
        const double t = x * static_cast<double>(n) - static_cast<double>(slice);
        const double interp = samples[slice].second + t * (samples[slice + 1].second - samples[slice].second);
        const double in[1] = {x};
        worst = std::max(worst, std::fabs(forward(approx.net, in)[0] - interp));
    }
    const json report{{"n", n},
                      {"epsilon", a.epsilon},
                      {"achieved_bound", approx.achieved_bound},
                      {"within_epsilon", approx.within_epsilon},
                      {"grid_points", a.grid + 1},
                      {"max_error_vs_interpolant", worst},
                      {"hidden_units", approx.net.hidden_units().size()}};
    write_json(out / "report.json", report);
    fmt::print("N {}\nmax slice jump {:.6g}\nmax error vs interpolant {:.3g}\n", n, approx.achieved_bound, worst);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rescaling-symmetry balancing for neural networks"};
    app.require_subcommand(1);
    const std::vector<std::string> args(argv, argv + argc);

    BalanceArgs ba;
    auto* balance = app.add_subcommand("balance", "balance a network document");
    balance->add_option("--net", ba.net, "network JSON")->required();
    balance->add_option("--cost", ba.cost, "cost, e.g. l2, l1, lp:1.5, 0.015*l1+1.0*l2");
    balance->add_option("--schedule", ba.schedule, "stochastic[:<seed>] | sequential | layer | layer-tied | partial");
    balance->add_option("--tol", ba.tol, "stop when deficit / R0^2 falls below this");
    balance->add_option("--max-steps", ba.max_steps);
    balance->add_option("--out", ba.out, "output directory");
    balance->add_flag("--allow-nonhomogeneous", ba.allow_nonhomogeneous, "also scale tanh/logistic units");

    UniquenessArgs ua;
    auto* uniq = app.add_subcommand("verify-uniqueness", "compare stochastic runs with the convex oracle");
    uniq->add_option("--net", ua.net, "network JSON")->required();
    uniq->add_option("--cost", ua.cost);
    uniq->add_option("--schedules", ua.schedules, "number of stochastic runs");
    uniq->add_option("--seeds", ua.seeds, "explicit seeds a,b,c (overrides --schedules)");
    uniq->add_option("--tol", ua.tol);
    uniq->add_option("--max-steps", ua.max_steps);
    uniq->add_option("--out", ua.out);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "train from a JSON config");
    train->add_option("--config", ta.config, "training config JSON")->required();
    train->add_option("--out", ta.out, "output directory (overrides config)");
    train->add_option("--seeds", ta.seeds, "seed list a,b,c (overrides config)");

    ApproxArgs aa;
    auto* approx = app.add_subcommand("approx", "build a one-hidden-layer interpolating network");
    approx->add_option("--samples", aa.samples, "CSV of x,y at knots k/N")->required();
    approx->add_option("--epsilon", aa.epsilon);
    approx->add_option("--n", aa.n, "expected N (samples = N + 1)");
    approx->add_option("--grid", aa.grid, "grid intervals for the error report");
    approx->add_option("--out", aa.out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*balance) return cmd_balance(ba, args);
        if (*uniq) return cmd_verify_uniqueness(ua, args);
        if (*train) return cmd_train(ta, args);
        if (*approx) return cmd_approx(aa, args);
    } catch (const ConvergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNotConverged;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
