#include "nethawkes/io.hpp"
#include "nethawkes/nethawkes.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace nh = nethawkes;
namespace io = nethawkes::io;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<double> parse_list(const std::string& s, const char* what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception&) {
            throw UsageError(std::string(what) + ": not a number: '" + item + "'");
        }
    }
    if (out.empty()) {
        throw UsageError(std::string(what) + ": empty list");
    }
    return out;
}

nh::ExposureMode parse_exposure(const std::string& s) {
    return s == "event_count" ? nh::ExposureMode::event_count : nh::ExposureMode::exact;
}

// Reads a flat key = value file into "--key=value" arguments. '#' starts a comment.
std::vector<std::string> config_arguments(const fs::path& path) {
    std::istringstream in(io::read_file(path));
    std::vector<std::string> out;
    std::string line;
    std::size_t lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            value = value.substr(1, value.size() - 2);
        }
        std::replace(key.begin(), key.end(), '_', '-');
        if (key.empty() || key == "config") {
            throw UsageError(path.string() + ":" + std::to_string(lineno) + ": invalid key");
        }
        out.push_back("--" + key + "=" + value);
    }
    return out;
}

// Resolved option values of a subcommand, for the manifest.
json options_json(const CLI::App* sub) {
    json cfg = json::object();
    for (const CLI::Option* opt : sub->get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help") {
            continue;
        }
        if (opt->count() > 0) {
            const auto& r = opt->results();
            if (r.size() == 1) {
                cfg[name] = r.front();
            } else {
                cfg[name] = r;
            }
        } else {
            cfg[name] = opt->get_default_str();
        }
    }
    return cfg;
}

struct Common {
    std::string out = "out";
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::string config;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--out", c.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    sub->add_option("--threads", c.threads, "Maximum worker threads")->capture_default_str()->check(
        CLI::PositiveNumber);
    sub->add_option("--config", c.config, "Flat key = value file supplying defaults");
}

struct BasisOpts {
    std::size_t B = 1;
    std::size_t D = 10;
    std::string kind = "gaussian";
    std::string file;
};

void add_basis(CLI::App* sub, BasisOpts& b) {
    sub->add_option("--B", b.B, "Number of basis functions")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--D", b.D, "Maximum lag in bins")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--basis-kind", b.kind, "gaussian or boxcar")
        ->capture_default_str()
        ->check(CLI::IsMember({"gaussian", "boxcar"}));
    sub->add_option("--basis", b.file, "Basis JSON file (overrides B, D and kind)");
}

nh::BasisSet build_basis(const BasisOpts& b, std::size_t T, std::size_t K, double dt) {
    if (!b.file.empty()) {
        json j = io::read_json(b.file);
        if (j.contains("basis")) {
            j = j["basis"];
        }
        nh::BasisSet basis = io::basis_from_json(j);
        if (std::abs(basis.dt - dt) > 1e-12 * std::max(1.0, dt)) {
            throw std::invalid_argument("basis bin width " + std::to_string(basis.dt) +
                                        " does not match the counts (" + std::to_string(dt) + ")");
        }
        return basis;
    }
    const nh::Dims dims{T, K, b.B, b.D, dt};
    dims.validate();
    return nh::make_basis(dims, b.kind == "boxcar" ? nh::BasisKind::boxcar : nh::BasisKind::gaussian_bumps);
}

struct HyperOpts {
    double alpha_lambda = 1.0, beta_lambda = 1.0, gamma = 1.0, kappa = 3.0, kappa0 = 0.1, nu0 = 100.0;
    double tau1 = 1.0, tau0 = 1.0, alpha_v = 10.0, beta_v = 1.0;
    double fixed_p = 0.0, fixed_v = 0.0;
    CLI::Option* fixed_p_opt = nullptr;
    CLI::Option* fixed_v_opt = nullptr;
    std::string exposure = "exact";
};

void add_hyper(CLI::App* sub, HyperOpts& h) {
    sub->add_option("--alpha-lambda", h.alpha_lambda, "Background gamma shape")->capture_default_str();
    sub->add_option("--beta-lambda", h.beta_lambda, "Background gamma rate")->capture_default_str();
    sub->add_option("--gamma", h.gamma, "Impulse Dirichlet concentration (per basis)")->capture_default_str();
    sub->add_option("--kappa", h.kappa, "Slab gamma shape")->capture_default_str();
    sub->add_option("--kappa0", h.kappa0, "Spike gamma shape")->capture_default_str();
    sub->add_option("--nu0", h.nu0, "Spike gamma rate")->capture_default_str();
    sub->add_option("--tau1", h.tau1, "Beta prior on p, first parameter")->capture_default_str();
    sub->add_option("--tau0", h.tau0, "Beta prior on p, second parameter")->capture_default_str();
    sub->add_option("--alpha-v", h.alpha_v, "Gamma prior on v, shape")->capture_default_str();
    sub->add_option("--beta-v", h.beta_v, "Gamma prior on v, rate")->capture_default_str();
    h.fixed_p_opt = sub->add_option("--fixed-p", h.fixed_p, "Fix the connection probability");
    h.fixed_v_opt = sub->add_option("--fixed-v", h.fixed_v, "Fix the weight rate");
    sub->add_option("--exposure", h.exposure, "exact or event_count")
        ->capture_default_str()
        ->check(CLI::IsMember({"exact", "event_count"}));
}

nh::HyperParams build_hyper(const HyperOpts& o, std::size_t B) {
    nh::HyperParams h;
    h.alpha_lambda = o.alpha_lambda;
    h.beta_lambda = o.beta_lambda;
    h.gamma.assign(B, o.gamma);
    h.kappa = o.kappa;
    h.kappa0 = o.kappa0;
    h.nu0 = o.nu0;
    h.validate(B);
    return h;
}

nh::ErdosRenyiPrior build_prior(const HyperOpts& o, std::size_t K) {
    nh::ErdosRenyiPrior::Config c;
    c.tau1 = o.tau1;
    c.tau0 = o.tau0;
    c.alpha_v = o.alpha_v;
    c.beta_v = o.beta_v;
    if (o.fixed_p_opt->count()) {
        c.fixed_p = o.fixed_p;
    }
    if (o.fixed_v_opt->count()) {
        c.fixed_v = o.fixed_v;
    }
    return nh::ErdosRenyiPrior(K, c);
}

void write_manifest(const fs::path& out, const CLI::App* sub, const Common& c, const json& fidelity,
                    const std::vector<std::string>& argv, json extra = json::object()) {
    json m{{"command", sub->get_name()},
           {"version", nh::kVersion},
           {"seed", c.seed},
           {"threads", c.threads},
           {"config", options_json(sub)},
           {"fidelity", fidelity},
           {"argv", argv}};
    if (!c.config.empty()) {
        m["config_file"] = c.config;
    }
    for (auto& [k, v] : extra.items()) {
        m[k] = v;
    }
    io::write_json(out / "manifest.json", m);
}

json flat(const nh::Matrix<double>& m) { return m.data(); }

json summary_json(const std::string& algorithm, const nh::PosteriorSummary& s) {
    return json{{"algorithm", algorithm},    {"K", s.mean_A.rows()},   {"mean_A", flat(s.mean_A)},
                {"std_A", flat(s.std_A)},    {"mean_W", flat(s.mean_W)}, {"lambda0", s.mean_lambda0}};
}

std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines) {
        out += l;
        out += '\n';
    }
    return out;
}

// Trace lines carried over from an earlier run when resuming into the same directory.
std::vector<std::string> resumed_trace(const json& ckpt) {
    std::vector<std::string> lines;
    for (const auto& l : ckpt.at("trace")) {
        lines.push_back(l.get<std::string>());
    }
    return lines;
}

// ---------------------------------------------------------------- simulate

struct SimulateOpts {
    std::size_t K = 10, T = 1000;
    double dt = 1.0, p = 0.25, weight_shape = 3.0, weight_rate = 15.0, lambda0 = 1.0, lambda0_shape = 0.0;
    double radius = 0.0, impulse_concentration = 0.0;
    bool include_diagonal = true;
    std::string params;
    std::string description;
};

void run_simulate(const CLI::App* sub, const Common& c, const SimulateOpts& o, const BasisOpts& bo,
                  const std::vector<std::string>& argv) {
    const fs::path out(c.out);
    nh::Rng rng(c.seed);
    nh::ModelParams truth;
    nh::BasisSet basis;
    if (!o.params.empty()) {
        const json j = io::read_json(o.params);
        truth = io::params_from_json(j.contains("params") ? j.at("params") : j);
        basis = (j.contains("basis") && bo.file.empty()) ? io::basis_from_json(j.at("basis"))
                                                          : build_basis(bo, o.T, truth.K(), o.dt);
    } else {
        nh::SyntheticNetworkConfig sc;
        sc.K = o.K;
        sc.B = bo.file.empty() ? bo.B : io::basis_from_json(io::read_json(bo.file)).B;
        sc.p = o.p;
        sc.weight_shape = o.weight_shape;
        sc.weight_rate = o.weight_rate;
        sc.lambda0_mean = o.lambda0;
        sc.lambda0_shape = o.lambda0_shape;
        sc.include_diagonal = o.include_diagonal;
        sc.target_radius = o.radius;
        sc.impulse_concentration = o.impulse_concentration;
        truth = nh::make_synthetic_params(sc, rng);
        basis = build_basis(bo, o.T, o.K, o.dt);
    }
    nh::SimConfig cfg;
    cfg.dims = {o.T, truth.K(), basis.B, basis.D, basis.dt};
    cfg.seed = nh::mix_seed(c.seed + 1);
    cfg.params = truth;
    cfg.basis = basis;
    cfg.warn_unstable = false;
    const nh::StabilityReport stab = nh::check_stability(truth.W);
    if (!stab.stable) {
        std::cerr << json{{"warning", {{"type", "unstable_network"},
                                       {"message", "spectral radius " + std::to_string(stab.spectral_radius) +
                                                       " >= 1; the process is not stationary"}}}}
                         .dump()
                  << std::endl;
    }
    const nh::CountMatrix S = nh::sample_forward(cfg);

    io::write_counts(out / "counts.csv", S, o.description);
    io::write_json(out / "params.json", json{{"params", io::params_json(truth)},
                                             {"basis", io::basis_json(basis)},
                                             {"spectral_radius", stab.spectral_radius}});
    const double events = S.total();
    const double duration = static_cast<double>(S.T) * S.dt;
    std::vector<double> per_process = S.totals();
    for (double& r : per_process) {
        r /= duration;
    }
    io::write_json(out / "summary.json",
                   json{{"events", events},
                        {"T", S.T},
                        {"K", S.K},
                        {"dt", S.dt},
                        {"mean_rate", events / (duration * static_cast<double>(S.K))},
                        {"rate_per_process", per_process},
                        {"spectral_radius", stab.spectral_radius},
                        {"stable", stab.stable}});
    write_manifest(out, sub, c, {{"include_diagonal", o.include_diagonal}}, argv);
}

// ---------------------------------------------------------------- shared fit plumbing

struct FitOpts {
    std::string counts;
    std::size_t iters = 100; // sweeps for Gibbs, iterations for VB / SVI
    std::size_t burnin = 0;
    std::size_t thin = 1;
    std::size_t draw_every = 10;
    std::size_t max_draws = 100;
    std::string init = "prior";
    std::string init_params;
    double init_l1 = 0.0;
    double init_p = 0.0;
    CLI::Option* init_p_opt = nullptr;
    std::size_t checkpoint_every = 0;
    std::string resume;
    std::size_t elbo_every = 1;
    double tol = 0.0;
    // SVI schedule
    std::size_t minibatch = 1024;
    double exponent = 0.5;
    double fixed_step = 0.0;
    CLI::Option* fixed_step_opt = nullptr;
};

void add_fit(CLI::App* sub, FitOpts& f, bool sampler) {
    sub->add_option("--counts", f.counts, "Counts CSV (with optional JSON sidecar)")->required()->check(
        CLI::ExistingFile);
    sub->add_option("--init", f.init, "prior, map or params")
        ->capture_default_str()
        ->check(CLI::IsMember({"prior", "map", "params"}));
    sub->add_option("--init-params", f.init_params, "Parameter JSON used with --init params");
    sub->add_option("--init-l1", f.init_l1, "Weight penalty of the MAP initializer")->capture_default_str();
    f.init_p_opt = sub->add_option("--init-p", f.init_p, "Fraction of MAP weights kept (default: prior mean p)");
    sub->add_option("--checkpoint-every", f.checkpoint_every, "Checkpoint interval (0: only at the end)")
        ->capture_default_str();
    sub->add_option("--resume", f.resume, "Checkpoint file to continue from")->check(CLI::ExistingFile);
    if (sampler) {
        sub->add_option("--samples", f.iters, "Number of Gibbs sweeps")->capture_default_str();
        sub->add_option("--burnin", f.burnin, "Sweeps excluded from the summary")->capture_default_str();
        sub->add_option("--thin", f.thin, "Keep every n-th post-burn-in sweep")->capture_default_str()->check(
            CLI::PositiveNumber);
        sub->add_option("--draw-every", f.draw_every, "Store every n-th kept sample for evaluation")
            ->capture_default_str()
            ->check(CLI::PositiveNumber);
        sub->add_option("--max-draws", f.max_draws, "Maximum stored samples")->capture_default_str();
    } else {
        sub->add_option("--iters", f.iters, "Number of iterations")->capture_default_str();
        sub->add_option("--elbo-every", f.elbo_every, "Bound evaluation interval (0: never)")
            ->capture_default_str();
        sub->add_option("--tol", f.tol, "Stop when the relative bound change falls below this (0: off)")
            ->capture_default_str();
    }
}

void add_svi(CLI::App* sub, FitOpts& f) {
    sub->add_option("--minibatch", f.minibatch, "Time bins per mini-batch")->capture_default_str()->check(
        CLI::PositiveNumber);
    sub->add_option("--exponent", f.exponent, "Step-size decay exponent")->capture_default_str();
    f.fixed_step_opt = sub->add_option("--fixed-step", f.fixed_step, "Constant step size in (0, 1]");
}

struct FitContext {
    nh::CountMatrix S;
    nh::BasisSet basis;
    nh::HyperParams hyper;
    nh::ErdosRenyiPrior prior;
};

FitContext load_fit(const FitOpts& f, const BasisOpts& bo, const HyperOpts& ho) {
    nh::CountMatrix S = io::read_counts(f.counts);
    nh::BasisSet basis = build_basis(bo, S.T, S.K, S.dt);
    if (basis.D >= S.T) {
        throw std::invalid_argument("the lag window D must be smaller than T");
    }
    nh::HyperParams hyper = build_hyper(ho, basis.B);
    nh::ErdosRenyiPrior prior = build_prior(ho, S.K);
    return {std::move(S), std::move(basis), std::move(hyper), std::move(prior)};
}

nh::MapInitialization map_initialization(const FitContext& ctx, const FitOpts& f) {
    nh::MapConfig mc;
    mc.l1_scale = f.init_l1;
    const nh::MapResult res = nh::map_fit(ctx.S, ctx.basis, mc);
    const double keep = f.init_p_opt->count() ? f.init_p : ctx.prior.p();
    return nh::initialize_from_map(res.params, keep, ctx.hyper, ctx.prior);
}

nh::ModelParams load_params_file(const std::string& path) {
    const json j = io::read_json(path);
    return io::params_from_json(j.contains("params") ? j.at("params") : j);
}

json fidelity_json(const HyperOpts& ho) { return {{"exposure", ho.exposure}}; }

// ---------------------------------------------------------------- fit-gibbs

struct GibbsAccumulator {
    std::size_t n = 0;
    std::vector<double> sum_A, sum_W, sum_lambda0;

    void add(const nh::ModelParams& p) {
        const std::size_t K = p.K();
        if (sum_A.empty()) {
            sum_A.assign(K * K, 0.0);
            sum_W.assign(K * K, 0.0);
            sum_lambda0.assign(K, 0.0);
        }
        for (std::size_t i = 0; i < K * K; ++i) {
            sum_A[i] += p.A.data()[i];
            sum_W[i] += p.W.data()[i];
        }
        for (std::size_t k = 0; k < K; ++k) {
            sum_lambda0[k] += p.lambda0[k];
        }
        ++n;
    }

    [[nodiscard]] nh::PosteriorSummary summary(std::size_t K) const {
        nh::PosteriorSummary s{nh::Matrix<double>(K, K, 0.0), nh::Matrix<double>(K, K, 0.0),
                               nh::Matrix<double>(K, K, 0.0), std::vector<double>(K, 0.0), {}};
        if (n == 0) {
            return s;
        }
        const double dn = static_cast<double>(n);
        for (std::size_t i = 0; i < K * K; ++i) {
            const double m = sum_A[i] / dn;
            s.mean_A.data()[i] = m;
            s.std_A.data()[i] = std::sqrt(std::max(0.0, m * (1.0 - m)));
            s.mean_W.data()[i] = sum_W[i] / dn;
        }
        for (std::size_t k = 0; k < K; ++k) {
            s.mean_lambda0[k] = sum_lambda0[k] / dn;
        }
        return s;
    }

    [[nodiscard]] json to_json() const {
        return {{"n", n}, {"sum_A", sum_A}, {"sum_W", sum_W}, {"sum_lambda0", sum_lambda0}};
    }
    static GibbsAccumulator from_json(const json& j) {
        GibbsAccumulator a;
        a.n = j.at("n").get<std::size_t>();
        a.sum_A = j.at("sum_A").get<std::vector<double>>();
        a.sum_W = j.at("sum_W").get<std::vector<double>>();
        a.sum_lambda0 = j.at("sum_lambda0").get<std::vector<double>>();
        return a;
    }
};

void run_fit_gibbs(const CLI::App* sub, const Common& c, const FitOpts& f, const BasisOpts& bo,
                   const HyperOpts& ho, const std::vector<std::string>& argv) {
    const fs::path out(c.out);
    FitContext ctx = load_fit(f, bo, ho);
    const std::size_t K = ctx.S.K;
    nh::GibbsOptions gopts;
    gopts.exposure = parse_exposure(ho.exposure);

    json ckpt;
    nh::ModelParams init;
    if (!f.resume.empty()) {
        ckpt = io::read_json(f.resume);
        if (ckpt.value("algorithm", "") != "gibbs") {
            throw std::invalid_argument("checkpoint " + f.resume + " was not written by fit-gibbs");
        }
        init = io::params_from_json(ckpt.at("params"));
    } else if (f.init == "map") {
        init = map_initialization(ctx, f).gibbs;
    } else if (f.init == "params") {
        if (f.init_params.empty()) {
            throw UsageError("--init params requires --init-params");
        }
        init = load_params_file(f.init_params);
    } else {
        nh::Rng rng(nh::mix_seed(c.seed ^ 0x5eedULL));
        nh::ErdosRenyiPrior pr = ctx.prior;
        pr.sample_from_prior(rng);
        init = nh::sample_params_from_prior(K, ctx.basis.B, ctx.hyper, pr.p(), pr.v(), rng);
    }
    if (init.K() != K || init.B() != ctx.basis.B) {
        throw std::invalid_argument("initial parameters do not match the counts and basis");
    }
    nh::GibbsSampler sampler(ctx.S, ctx.basis, ctx.hyper, ctx.prior, init, c.seed, gopts);

    std::vector<std::string> trace;
    std::vector<json> draws;
    GibbsAccumulator acc;
    double elapsed0 = 0.0;
    if (!ckpt.is_null()) {
        io::restore_prior(sampler.prior(), ckpt.at("prior"));
        nh::restore_rng_state(sampler.rng(), ckpt.at("rng").get<std::string>());
        sampler.set_sweeps(ckpt.at("iteration").get<std::size_t>());
        trace = resumed_trace(ckpt);
        for (const auto& d : ckpt.at("draws")) {
            draws.push_back(d);
        }
        acc = GibbsAccumulator::from_json(ckpt.at("accumulator"));
        elapsed0 = ckpt.at("elapsed").get<double>();
    }

    auto write_outputs = [&](double elapsed) {
        std::string samples;
        for (const auto& d : draws) {
            samples += d.dump() + "\n";
        }
        io::atomic_write(out / "trace.jsonl", join_lines(trace));
        io::atomic_write(out / "samples.jsonl", samples);
        json s = summary_json("gibbs", acc.summary(K));
        s["iterations"] = sampler.sweeps();
        s["kept"] = acc.n;
        io::write_json(out / "summary.json", s);
        io::write_json(out / "params.json", json{{"params", io::params_json(sampler.params())}});
        io::write_json(out / "basis.json", io::basis_json(ctx.basis));
        io::write_json(out / "checkpoint.json", json{{"algorithm", "gibbs"},
                                                     {"iteration", sampler.sweeps()},
                                                     {"params", io::params_json(sampler.params())},
                                                     {"prior", io::prior_json(sampler.prior())},
                                                     {"rng", nh::rng_state_string(sampler.rng())},
                                                     {"trace", trace},
                                                     {"draws", draws},
                                                     {"accumulator", acc.to_json()},
                                                     {"elapsed", elapsed}});
    };

    write_manifest(out, sub, c, fidelity_json(ho), argv, {{"algorithm", "gibbs"}, {"counts", f.counts}});
    const auto t0 = Clock::now();
    while (sampler.sweeps() < f.iters) {
        sampler.sweep();
        const std::size_t it = sampler.sweeps();
        const nh::ModelParams& p = sampler.params();
        double edges = 0.0, wsum = 0.0, lsum = 0.0;
        for (std::size_t i = 0; i < K * K; ++i) {
            edges += p.A.data()[i];
            wsum += p.W.data()[i];
        }
        for (double l : p.lambda0) {
            lsum += l;
        }
        if (it > f.burnin && (it - f.burnin) % f.thin == 0) {
            acc.add(p);
            if ((acc.n - 1) % f.draw_every == 0 && draws.size() < f.max_draws) {
                draws.push_back(io::params_json(p));
            }
        }
        const double elapsed = elapsed0 + seconds_since(t0);
        trace.push_back(json{{"iteration", it},
                             {"seconds", elapsed},
                             {"log_joint", sampler.log_joint()},
                             {"edges", edges},
                             {"p", sampler.prior().p()},
                             {"v", sampler.prior().v()},
                             {"sum_W", wsum},
                             {"mean_lambda0", lsum / static_cast<double>(K)}}
                            .dump());
        if (f.checkpoint_every > 0 && it % f.checkpoint_every == 0) {
            write_outputs(elapsed);
        }
    }
    write_outputs(elapsed0 + seconds_since(t0));
}

// ---------------------------------------------------------------- fit-vb / fit-svi

void run_fit_variational(const CLI::App* sub, const Common& c, const FitOpts& f, const BasisOpts& bo,
                         const HyperOpts& ho, bool stochastic, const std::vector<std::string>& argv) {
    const fs::path out(c.out);
    const std::string algorithm = stochastic ? "svi" : "vb";
    FitContext ctx = load_fit(f, bo, ho);
    nh::VariationalInference vi(ctx.S, ctx.basis, ctx.hyper, ctx.prior, {parse_exposure(ho.exposure)});
    nh::SviSchedule schedule{f.minibatch, f.exponent, {}};
    if (stochastic) {
        if (f.fixed_step_opt->count()) {
            if (!(f.fixed_step > 0.0 && f.fixed_step <= 1.0)) {
                throw UsageError("--fixed-step must lie in (0, 1]");
            }
            schedule.fixed_step = f.fixed_step;
        }
        if (f.minibatch > ctx.S.T) {
            throw UsageError("--minibatch exceeds the number of time bins");
        }
    }
    nh::Rng rng(c.seed);
    std::vector<std::string> trace;
    double elapsed0 = 0.0;
    if (!f.resume.empty()) {
        const json ckpt = io::read_json(f.resume);
        if (ckpt.value("algorithm", "") != algorithm) {
            throw std::invalid_argument("checkpoint " + f.resume + " was not written by fit-" + algorithm);
        }
        vi.set_state(io::variational_from_json(ckpt.at("state")));
        io::restore_prior(vi.prior(), ckpt.at("prior"));
        nh::restore_rng_state(rng, ckpt.at("rng").get<std::string>());
        trace = resumed_trace(ckpt);
        elapsed0 = ckpt.at("elapsed").get<double>();
    } else if (f.init == "map") {
        vi.set_state(map_initialization(ctx, f).variational);
    } else if (f.init == "params") {
        throw UsageError("--init params is only supported by fit-gibbs");
    }

    auto write_outputs = [&](double elapsed) {
        const nh::VariationalState& q = vi.state();
        nh::Rng none(0);
        json s = summary_json(algorithm, nh::summarize_variational(q, 0, none));
        s["iterations"] = q.iteration;
        io::atomic_write(out / "trace.jsonl", join_lines(trace));
        io::write_json(out / "summary.json", s);
        io::write_json(out / "state.json",
                       json{{"state", io::variational_json(q)}, {"prior", io::prior_json(vi.prior())}});
        io::write_json(out / "basis.json", io::basis_json(ctx.basis));
        io::write_json(out / "checkpoint.json", json{{"algorithm", algorithm},
                                                     {"iteration", q.iteration},
                                                     {"state", io::variational_json(q)},
                                                     {"prior", io::prior_json(vi.prior())},
                                                     {"rng", nh::rng_state_string(rng)},
                                                     {"trace", trace},
                                                     {"elapsed", elapsed}});
    };

    write_manifest(out, sub, c, fidelity_json(ho), argv, {{"algorithm", algorithm}, {"counts", f.counts}});
    const auto t0 = Clock::now();
    double prev_elbo = std::numeric_limits<double>::quiet_NaN();
    while (vi.state().iteration < f.iters) {
        const std::size_t i = vi.state().iteration;
        const double rho = stochastic ? schedule.step(i) : 1.0;
        if (stochastic) {
            vi.svi_step(schedule, rng);
        } else {
            vi.vb_iterate();
        }
        const std::size_t it = vi.state().iteration;
        const nh::VariationalState& q = vi.state();
        double psum = 0.0, wsum = 0.0, lsum = 0.0;
        for (std::size_t k = 0; k < q.K(); ++k) {
            lsum += q.alpha[k] / q.beta[k];
            for (std::size_t kp = 0; kp < q.K(); ++kp) {
                psum += q.p(k, kp);
                wsum += q.mean_weight(k, kp);
            }
        }
        json rec{{"iteration", it},
                 {"seconds", 0.0},
                 {"rho", rho},
                 {"sum_p", psum},
                 {"sum_mean_W", wsum},
                 {"mean_lambda0", lsum / static_cast<double>(q.K())}};
        bool stop = false;
        if (f.elbo_every > 0 && (it % f.elbo_every == 0 || it == f.iters)) {
            // Report the bound with every local factor at its optimum for the current globals.
            vi.update_parents_q_all();
            const double L = vi.elbo();
            rec["elbo"] = L;
            if (f.tol > 0.0 && std::isfinite(prev_elbo) &&
                std::abs(L - prev_elbo) <= f.tol * std::max(1.0, std::abs(L))) {
                stop = true;
            }
            prev_elbo = L;
        }
        const double elapsed = elapsed0 + seconds_since(t0);
        rec["seconds"] = elapsed;
        trace.push_back(rec.dump());
        if (f.checkpoint_every > 0 && it % f.checkpoint_every == 0) {
            write_outputs(elapsed);
        }
        if (stop) {
            break;
        }
    }
    write_outputs(elapsed0 + seconds_since(t0));
}

// ---------------------------------------------------------------- fit-map

struct MapOpts {
    double l1 = 0.0;
    bool cv = false;
    std::string cv_grid = "0,1,10,100";
    double cv_fraction = 0.2;
    std::size_t max_iters = 500;
    double tol = 1e-8;
};

void run_fit_map(const CLI::App* sub, const Common& c, const FitOpts& f, const MapOpts& mo, const BasisOpts& bo,
                 const HyperOpts& ho, const std::vector<std::string>& argv) {
    const fs::path out(c.out);
    FitContext ctx = load_fit(f, bo, ho);
    nh::MapConfig cfg;
    cfg.l1_scale = mo.l1;
    cfg.max_iters = mo.max_iters;
    cfg.tol = mo.tol;
    cfg.cv_grid = parse_list(mo.cv_grid, "--cv-grid");
    cfg.cv_fraction = mo.cv_fraction;
    cfg.exposure = parse_exposure(ho.exposure);
    write_manifest(out, sub, c, fidelity_json(ho), argv, {{"algorithm", "map"}, {"counts", f.counts}});
    const auto t0 = Clock::now();
    if (mo.cv) {
        const nh::CrossValidationResult cv = nh::cross_validate(ctx.S, ctx.basis, cfg);
        cfg.l1_scale = cv.best;
        io::write_json(out / "cv.json",
                       json{{"grid", cv.grid}, {"heldout_loglik", cv.heldout_loglik}, {"best", cv.best}});
    }
    const nh::MapResult res = nh::map_fit(ctx.S, ctx.basis, cfg);
    const double elapsed = seconds_since(t0);
    std::vector<std::string> trace;
    for (std::size_t i = 0; i < res.objective.size(); ++i) {
        trace.push_back(json{{"iteration", i + 1}, {"objective", res.objective[i]}}.dump());
    }
    io::atomic_write(out / "trace.jsonl", join_lines(trace));
    json s = summary_json("map", nh::summarize_point(res.params));
    s["iterations"] = res.iterations;
    s["converged"] = res.converged;
    s["l1_scale"] = cfg.l1_scale;
    s["seconds"] = elapsed;
    io::write_json(out / "summary.json", s);
    io::write_json(out / "params.json", json{{"params", io::params_json(res.params)}});
    io::write_json(out / "basis.json", io::basis_json(ctx.basis));
}

// ---------------------------------------------------------------- eval

struct EvalOpts {
    std::vector<std::string> fits;
    std::string truth;
    std::string test;
    std::string train;
    std::string counts;
    std::size_t xcorr_lag = 0;
    std::size_t draws = 100;
    bool include_diagonal = false;
};

nh::Matrix<std::uint8_t> load_truth(const std::string& path) {
    if (fs::path(path).extension() == ".csv") {
        const nh::Matrix<double> m = io::read_real_matrix(path);
        nh::Matrix<std::uint8_t> a(m.rows(), m.cols(), 0);
        for (std::size_t i = 0; i < m.size(); ++i) {
            a.data()[i] = m.data()[i] != 0.0 ? 1 : 0;
        }
        return a;
    }
    return load_params_file(path).A;
}

nh::Matrix<double> square_from_flat(const json& j, std::size_t K, const char* what) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != K * K) {
        throw std::runtime_error(std::string("summary field ") + what + " has the wrong length");
    }
    nh::Matrix<double> m(K, K);
    std::copy(v.begin(), v.end(), m.data().begin());
    return m;
}

void run_eval(const CLI::App* sub, const Common& c, const EvalOpts& o, const std::vector<std::string>& argv) {
    const fs::path out(c.out);
    if (o.truth.empty() && o.test.empty()) {
        throw UsageError("eval needs --truth (link metrics) and/or --test (predictive likelihood)");
    }
    if (!o.test.empty() && o.train.empty()) {
        throw UsageError("--test requires --train for the homogeneous baseline");
    }
    if (o.fits.empty() && o.xcorr_lag == 0) {
        throw UsageError("eval needs at least one --fit directory or --xcorr-lag");
    }
    std::optional<nh::Matrix<std::uint8_t>> truth;
    if (!o.truth.empty()) {
        truth = load_truth(o.truth);
    }
    std::optional<nh::CountMatrix> test;
    std::vector<double> baseline;
    if (!o.test.empty()) {
        test = io::read_counts(o.test);
        baseline = nh::homogeneous_rates(io::read_counts(o.train));
    }
    nh::Rng rng(c.seed);
    json rows = json::array();
    std::map<std::string, int> seen;
    for (const std::string& dir_str : o.fits) {
        const fs::path dir(dir_str);
        const json manifest = io::read_json(dir / "manifest.json");
        const json summary = io::read_json(dir / "summary.json");
        const std::string algorithm = manifest.value("algorithm", summary.value("algorithm", "unknown"));
        std::string label = dir.filename().string();
        if (label.empty()) {
            label = dir.parent_path().filename().string();
        }
        if (seen[label]++ > 0) {
            label += "_" + std::to_string(seen[label]);
        }
        const std::size_t K = summary.at("K").get<std::size_t>();
        nh::PosteriorSummary post{square_from_flat(summary.at("mean_A"), K, "mean_A"),
                                  square_from_flat(summary.at("std_A"), K, "std_A"),
                                  square_from_flat(summary.at("mean_W"), K, "mean_W"),
                                  summary.at("lambda0").get<std::vector<double>>(),
                                  {}};
        json row{{"label", label}, {"algorithm", algorithm}, {"fit", dir_str}};
        if (truth) {
            if (truth->rows() != K) {
                throw std::invalid_argument("truth has " + std::to_string(truth->rows()) + " processes, fit " +
                                            label + " has " + std::to_string(K));
            }
            // A point estimate has no edge probabilities; its weights rank the links.
            const bool point = algorithm == "map";
            const auto scores = nh::make_link_scores(point ? post.mean_W : post.mean_A, o.include_diagonal);
            const nh::LinkReport rep = nh::link_report(scores, *truth);
            row["roc_auc"] = rep.roc_auc;
            row["pr_auc"] = rep.pr_auc;
            row["score"] = point ? "mean_W" : "mean_A";
        }
        if (algorithm != "map") {
            nh::Matrix<double> u = nh::uncertainty_map(post);
            for (double& x : u.data()) {
                x = std::min(x, nh::kUncertaintyCap);
            }
            io::atomic_write(out / ("uncertainty_" + label + ".csv"), io::matrix_csv(u));
        }
        if (test) {
            const nh::BasisSet basis = io::basis_from_json(io::read_json(dir / "basis.json"));
            std::vector<nh::ModelParams> draws;
            if (algorithm == "gibbs") {
                std::istringstream in(io::read_file(dir / "samples.jsonl"));
                std::string line;
                while (std::getline(in, line)) {
                    if (!line.empty()) {
                        draws.push_back(io::params_from_json(json::parse(line)));
                    }
                }
            } else if (algorithm == "map") {
                draws.push_back(load_params_file((dir / "params.json").string()));
            } else {
                const json st = io::read_json(dir / "state.json");
                const nh::VariationalState q = io::variational_from_json(st.at("state"));
                draws = nh::summarize_variational(q, o.draws, rng).draws;
            }
            const nh::PredictiveResult pr = nh::predictive_ll(*test, draws, basis, baseline);
            row["predictive_ll"] = pr.improvement;
            row["model_loglik"] = pr.model_loglik;
            row["baseline_loglik"] = pr.baseline_loglik;
            row["test_events"] = pr.events;
            row["draws"] = draws.size();
        }
        rows.push_back(row);
    }
    if (o.xcorr_lag > 0) {
        if (o.counts.empty() || !truth) {
            throw UsageError("--xcorr-lag needs --counts and --truth");
        }
        const nh::CountMatrix S = io::read_counts(o.counts);
        const nh::LinkReport rep = nh::link_report(nh::xcorr_baseline(S, o.xcorr_lag, o.include_diagonal), *truth);
        rows.push_back({{"label", "xcorr"}, {"algorithm", "xcorr"}, {"roc_auc", rep.roc_auc}, {"pr_auc", rep.pr_auc}});
    }
    std::ostringstream csv;
    csv.precision(17);
    csv << "label,algorithm,roc_auc,pr_auc,predictive_ll\n";
    for (const auto& r : rows) {
        auto field = [&](const char* k) -> std::string {
            if (!r.contains(k)) {
                return "";
            }
            std::ostringstream os;
            os.precision(17);
            os << r.at(k).get<double>();
            return os.str();
        };
        csv << r.at("label").get<std::string>() << ',' << r.at("algorithm").get<std::string>() << ','
            << field("roc_auc") << ',' << field("pr_auc") << ',' << field("predictive_ll") << '\n';
    }
    io::atomic_write(out / "metrics.csv", csv.str());
    io::write_json(out / "metrics.json", json{{"rows", rows}, {"include_diagonal", o.include_diagonal}});
    write_manifest(out, sub, c, {{"include_diagonal", o.include_diagonal}}, argv);
}

// ---------------------------------------------------------------- benchmark

struct BenchOpts {
    std::size_t T = 10000, K = 20, B = 3, D = 10;
    double dt = 1.0, p = 0.25, radius = 0.5;
    std::string grid = "1,10,100";
    std::size_t sweeps = 3;
    std::string exposure = "exact";
};

void run_benchmark(const CLI::App* sub, const Common& c, const BenchOpts& o, const std::vector<std::string>& argv) {
    const fs::path out(c.out);
    nh::BenchmarkConfig cfg;
    cfg.dims = {o.T, o.K, o.B, o.D, o.dt};
    cfg.events_per_bin = parse_list(o.grid, "--grid");
    cfg.sweeps = o.sweeps;
    cfg.p = o.p;
    cfg.target_radius = o.radius;
    cfg.seed = c.seed;
    cfg.exposure = parse_exposure(o.exposure);
    const auto rows = nh::run_benchmark(cfg);
    std::ostringstream csv;
    csv.precision(17);
    csv << "events_per_bin,seconds_per_sweep\n";
    json jrows = json::array();
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& r : rows) {
        csv << r.events_per_bin << ',' << r.seconds_per_sweep << '\n';
        jrows.push_back({{"events_per_bin", r.events_per_bin},
                         {"observed_per_bin", r.observed_per_bin},
                         {"seconds_per_sweep", r.seconds_per_sweep}});
        lo = std::min(lo, r.seconds_per_sweep);
        hi = std::max(hi, r.seconds_per_sweep);
    }
    io::atomic_write(out / "benchmark.csv", csv.str());
    io::write_json(out / "benchmark.json", json{{"rows", jrows}, {"max_over_min", hi / lo}});
    write_manifest(out, sub, c, {{"exposure", o.exposure}}, argv);
}

// ---------------------------------------------------------------- threshold

struct ThresholdOpts {
    std::string probs;
    double threshold = 0.7;
    double dt = 1.0;
};

void run_threshold(const CLI::App* sub, const Common& c, const ThresholdOpts& o, const std::vector<std::string>& argv) {
    const fs::path out(c.out);
    const nh::Matrix<double> prob = io::read_real_matrix(o.probs);
    const nh::CountMatrix S = nh::threshold_spikes(prob, o.threshold, o.dt);
    io::write_counts(out / "counts.csv", S, "thresholded spike probabilities from " + o.probs);
    write_manifest(out, sub, c, json::object(), argv);
}

void print_error(const std::string& type, const std::string& message) {
    std::cerr << json{{"error", {{"type", type}, {"message", message}}}}.dump() << std::endl;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discrete-time network Hawkes process: simulation, inference and evaluation", "nethawkes"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(nh::kVersion));

    Common common;
    BasisOpts basis;
    HyperOpts hyper;
    FitOpts fit;
    MapOpts map_opts;
    SimulateOpts sim;
    EvalOpts eval_opts;
    BenchOpts bench;
    ThresholdOpts thr;

    auto* simulate = app.add_subcommand("simulate", "Sample counts from a synthetic or given network");
    add_common(simulate, common);
    add_basis(simulate, basis);
    simulate->add_option("--K", sim.K, "Number of processes")->capture_default_str()->check(CLI::PositiveNumber);
    simulate->add_option("--T", sim.T, "Number of time bins")->capture_default_str()->check(CLI::PositiveNumber);
    simulate->add_option("--dt", sim.dt, "Bin width")->capture_default_str();
    simulate->add_option("--p", sim.p, "Edge probability")->capture_default_str();
    simulate->add_option("--weight-shape", sim.weight_shape, "Gamma shape of weights")->capture_default_str();
    simulate->add_option("--weight-rate", sim.weight_rate, "Gamma rate of weights")->capture_default_str();
    simulate->add_option("--lambda0", sim.lambda0, "Mean background rate")->capture_default_str();
    simulate->add_option("--lambda0-shape", sim.lambda0_shape, "Gamma shape of background rates (0: constant)")
        ->capture_default_str();
    simulate->add_option("--radius", sim.radius, "Rescale W to this spectral radius (0: keep)")
        ->capture_default_str();
    simulate->add_option("--impulse-concentration", sim.impulse_concentration,
                         "Dirichlet concentration of impulse coefficients (0: uniform)")
        ->capture_default_str();
    simulate->add_option("--include-diagonal", sim.include_diagonal, "Allow self-excitation")->capture_default_str();
    simulate->add_option("--params", sim.params, "Ground-truth parameter JSON (skips the random network)")
        ->check(CLI::ExistingFile);
    simulate->add_option("--description", sim.description, "Free text stored in the counts sidecar");

    auto* fit_gibbs = app.add_subcommand("fit-gibbs", "Gibbs sampling");
    auto* fit_vb = app.add_subcommand("fit-vb", "Batch variational Bayes");
    auto* fit_svi = app.add_subcommand("fit-svi", "Stochastic variational inference");
    auto* fit_map = app.add_subcommand("fit-map", "MAP estimate by EM");
    for (auto* sub : {fit_gibbs, fit_vb, fit_svi, fit_map}) {
        add_common(sub, common);
        add_basis(sub, basis);
        add_hyper(sub, hyper);
    }
    add_fit(fit_gibbs, fit, true);
    add_fit(fit_vb, fit, false);
    add_fit(fit_svi, fit, false);
    add_svi(fit_svi, fit);
    fit_map->add_option("--counts", fit.counts, "Counts CSV")->required()->check(CLI::ExistingFile);
    fit_map->add_option("--l1", map_opts.l1, "Exponential-prior rate on the weights")->capture_default_str();
    fit_map->add_flag("--cv", map_opts.cv, "Choose the penalty by temporal cross-validation");
    fit_map->add_option("--cv-grid", map_opts.cv_grid, "Comma-separated penalty grid")->capture_default_str();
    fit_map->add_option("--cv-fraction", map_opts.cv_fraction, "Held-out suffix fraction")->capture_default_str();
    fit_map->add_option("--max-iters", map_opts.max_iters, "EM iteration cap")->capture_default_str();
    fit_map->add_option("--tol", map_opts.tol, "Relative objective tolerance")->capture_default_str();

    auto* eval = app.add_subcommand("eval", "Link-prediction and predictive-likelihood metrics");
    add_common(eval, common);
    eval->add_option("--fit", eval_opts.fits, "Fit output directory (repeatable)")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
        ->check(CLI::ExistingDirectory);
    eval->add_option("--truth", eval_opts.truth, "Ground truth: parameter JSON or adjacency CSV")
        ->check(CLI::ExistingFile);
    eval->add_option("--test", eval_opts.test, "Held-out counts CSV")->check(CLI::ExistingFile);
    eval->add_option("--train", eval_opts.train, "Training counts CSV for the baseline")->check(CLI::ExistingFile);
    eval->add_option("--counts", eval_opts.counts, "Counts for the cross-correlation baseline")
        ->check(CLI::ExistingFile);
    eval->add_option("--xcorr-lag", eval_opts.xcorr_lag, "Maximum lag of the cross-correlation baseline (0: off)")
        ->capture_default_str();
    eval->add_option("--draws", eval_opts.draws, "Posterior draws for variational fits")->capture_default_str();
    eval->add_flag("--include-diagonal", eval_opts.include_diagonal, "Score self-edges too");

    auto* benchmark = app.add_subcommand("benchmark", "Time Gibbs sweeps across event rates");
    add_common(benchmark, common);
    benchmark->add_option("--T", bench.T, "Number of time bins")->capture_default_str();
    benchmark->add_option("--K", bench.K, "Number of processes")->capture_default_str();
    benchmark->add_option("--B", bench.B, "Number of basis functions")->capture_default_str();
    benchmark->add_option("--D", bench.D, "Maximum lag")->capture_default_str();
    benchmark->add_option("--dt", bench.dt, "Bin width")->capture_default_str();
    benchmark->add_option("--p", bench.p, "Edge probability")->capture_default_str();
    benchmark->add_option("--radius", bench.radius, "Spectral radius of the network")->capture_default_str();
    benchmark->add_option("--grid", bench.grid, "Comma-separated mean events per bin")->capture_default_str();
    benchmark->add_option("--sweeps", bench.sweeps, "Timed sweeps per grid point")->capture_default_str();
    benchmark->add_option("--exposure", bench.exposure, "exact or event_count")
        ->capture_default_str()
        ->check(CLI::IsMember({"exact", "event_count"}));

    auto* threshold = app.add_subcommand("threshold", "Binarize spike probabilities into counts");
    add_common(threshold, common);
    threshold->add_option("--probs", thr.probs, "Spike probability CSV")->required()->check(CLI::ExistingFile);
    threshold->add_option("--threshold", thr.threshold, "Inclusive threshold")->capture_default_str();
    threshold->add_option("--dt", thr.dt, "Bin width of the output")->capture_default_str();

    std::vector<std::string> args(argv + 1, argv + argc);
    const std::vector<std::string> original = args;
    try {
        // Config-file values go right after the subcommand so explicit flags override them.
        std::string config;
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (args[i] == "--config" && i + 1 < args.size()) {
                config = args[i + 1];
            } else if (args[i].rfind("--config=", 0) == 0) {
                config = args[i].substr(9);
            }
        }
        if (!config.empty()) {
            const auto extra = config_arguments(config);
            auto pos = std::find_if(args.begin(), args.end(), [&](const std::string& a) {
                for (const auto* s : app.get_subcommands({})) {
                    if (s->get_name() == a) {
                        return true;
                    }
                }
                return false;
            });
            if (pos == args.end()) {
                throw UsageError("--config requires a subcommand");
            }
            args.insert(pos + 1, extra.begin(), extra.end());
        }
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("usage_error", e.what());
        return 2;
    } catch (const UsageError& e) {
        print_error("usage_error", e.what());
        return 2;
    } catch (const std::exception& e) {
        print_error("io_error", e.what());
        return 2;
    }

    try {
        nh::set_max_threads(common.threads);
        if (simulate->parsed()) {
            run_simulate(simulate, common, sim, basis, original);
        } else if (fit_gibbs->parsed()) {
            run_fit_gibbs(fit_gibbs, common, fit, basis, hyper, original);
        } else if (fit_vb->parsed()) {
            run_fit_variational(fit_vb, common, fit, basis, hyper, false, original);
        } else if (fit_svi->parsed()) {
            run_fit_variational(fit_svi, common, fit, basis, hyper, true, original);
        } else if (fit_map->parsed()) {
            run_fit_map(fit_map, common, fit, map_opts, basis, hyper, original);
        } else if (eval->parsed()) {
            run_eval(eval, common, eval_opts, original);
        } else if (benchmark->parsed()) {
            run_benchmark(benchmark, common, bench, original);
        } else if (threshold->parsed()) {
            run_threshold(threshold, common, thr, original);
        }
    } catch (const UsageError& e) {
        print_error("usage_error", e.what());
        return 2;
    } catch (const nh::ExplosiveProcessError& e) {
        print_error("explosive_process", e.what());
        return 3;
    } catch (const nh::InconsistentStateError& e) {
        print_error("inconsistent_state", e.what());
        return 4;
    } catch (const nh::UndefinedMetricError& e) {
        print_error("undefined_metric", e.what());
        return 5;
    } catch (const std::invalid_argument& e) {
        print_error("invalid_argument", e.what());
        return 6;
    } catch (const std::exception& e) {
        print_error("runtime_error", e.what());
        return 1;
    }
    return 0;
}
