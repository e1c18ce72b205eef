// Batch front-end: device generation, pattern design, protocol runs,
// capability tables and attack campaigns, with CSV/JSON outputs.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "obpuf/attack.hpp"
#include "obpuf/metrics.hpp"
#include "obpuf/obfuscation.hpp"
#include "obpuf/protocol.hpp"
#include "obpuf/serialize.hpp"

namespace fs = std::filesystem;
using namespace obpuf;

namespace {

constexpr const char* kVersion = "0.1.0";

struct GlobalOpts {
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir = ".";
    std::string format = "csv";
};

std::uint64_t ensure_seed(GlobalOpts& g) {
    if (!g.seed_set) {
        std::random_device rd;
        g.seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
        std::cout << "seed: " << g.seed << " (drawn; pass --seed to reproduce)\n";
    } else {
        std::cout << "seed: " << g.seed << "\n";
    }
    return g.seed;
}

std::string provenance(const std::string& cmd, std::uint64_t seed, const std::string& params) {
    std::ostringstream s;
    s << "# obpuf v" << kVersion << " | " << cmd << " | seed=" << seed << " | " << params;
    return s.str();
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    std::cout << "wrote " << path.string() << "\n";
}

std::string fmt(double v, int prec = 6) {
    std::ostringstream s;
    s.precision(prec);
    s << v;
    return s.str();
}

// JSON config file values become flag defaults; explicit flags still win
// because they are applied afterwards by the parser.
void apply_config_file(CLI::App& app, GlobalOpts& g, int argc, char** argv) {
    std::string path;
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--config") path = argv[i + 1];
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
    nlohmann::json j;
    in >> j;
    for (auto& [key, value] : j.items()) {
        if (key == "seed") {
            g.seed = value.get<std::uint64_t>();
            g.seed_set = true;
            continue;
        }
        std::string flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        for (auto* sub : app.get_subcommands({})) {
            if (auto* opt = sub->get_option_no_throw(flag)) {
                opt->default_val(value.is_string() ? value.get<std::string>()
                                                   : value.dump());
            }
        }
        if (auto* opt = app.get_option_no_throw(flag))
            opt->default_val(value.is_string() ? value.get<std::string>() : value.dump());
    }
}

int cmd_design(GlobalOpts& g, int k, int m, int p, int n_ins, int budget,
               std::size_t samples, bool adversarial) {
    if (m < 1 || m >= k || (m < 63 && (1LL << m) < p)) {
        std::cerr << "usage error: need 1 <= m < k and p <= 2^m (got k=" << k << " m=" << m
                  << " p=" << p << "); " << p << " distinct " << m
                  << "-bit insert-value strings do not exist\n";
        return 2;
    }
    const auto seed = ensure_seed(g);
    PatternSet set;
    bool bar = true;
    if (adversarial) {
        set = first_positions_pattern_set(k, m, p, n_ins, derive_seed(seed, 0xadull));
    } else {
        auto res = design_pattern_set(k, m, p, n_ins, seed, budget);
        set = std::move(res.set);
        bar = res.met_challenge_bar;
    }
    const auto stats = score_pattern_set(set, samples, derive_seed(seed, 0x5c04eull), true);

    std::ostringstream params;
    params << "k=" << k << " m=" << m << " p=" << p << " n_ins=" << n_ins
           << " trial_budget=" << budget << " samples=" << samples
           << " adversarial=" << adversarial;

    write_file(fs::path(g.out_dir) / "pattern_set.json", to_json(set).dump(2) + "\n");

    std::ostringstream report;
    report << provenance("design", seed, params.str()) << "\n";
    report << "metric,value\n";
    report << "challenge_side_mean_fhd," << fmt(stats.challenge_side_fhd) << "\n";
    report << "response_side_mean_fhd," << fmt(stats.response_side_fhd) << "\n";
    report << "masked_response_mean_fhd," << fmt(stats.masked_response_fhd) << "\n";
    report << "challenge_bar_met," << (bar ? 1 : 0) << "\n";
    write_file(fs::path(g.out_dir) / "design_report.csv", report.str());

    std::ostringstream hist;
    hist << provenance("design", seed, params.str()) << "\n";
    hist << "sample,challenge_fhd,response_fhd\n";
    for (std::size_t i = 0; i < stats.challenge_histogram.size(); ++i)
        hist << i << ',' << fmt(stats.challenge_histogram[i]) << ','
             << fmt(stats.response_histogram[i]) << "\n";
    write_file(fs::path(g.out_dir) / "design_fhd_hist.csv", hist.str());

    std::cout << "challenge-side mean pairwise FHD: " << stats.challenge_side_fhd << "\n"
              << "response-side mean pairwise FHD:  " << stats.response_side_fhd << "\n";
    if (!adversarial && !bar)
        std::cout << "note: challenge-side bar 0.45 not met within the trial budget\n";
    return 0;
}

int cmd_capability(GlobalOpts& g, double intra_puf, const std::string& targets_csv,
                   const std::string& configs_csv, std::size_t empirical_trials) {
    const auto seed = ensure_seed(g);
    std::vector<double> targets;
    {
        std::istringstream in(targets_csv);
        std::string tok;
        while (std::getline(in, tok, ',')) targets.push_back(std::stod(tok));
    }
    std::vector<EstimatorInputs> configs;
    {
        std::istringstream in(configs_csv);
        std::string tok;
        while (std::getline(in, tok, ';')) {
            EstimatorInputs e;
            e.p_intra_puf = intra_puf;
            if (std::sscanf(tok.c_str(), "%d,%d,%d", &e.n_ins, &e.p, &e.n_mismatch) != 3)
                throw CLI::ValidationError("--configs", "expected n_ins,p,n_mismatch;...");
            configs.push_back(e);
        }
    }

    std::ostringstream params;
    params << "intra_puf=" << intra_puf << " targets=" << targets_csv
           << " configs=" << configs_csv;

    std::ostringstream table, disc;
    nlohmann::json json_rows = nlohmann::json::array();
    table << provenance("capability", seed, params.str()) << "\n";
    table << "n_ins,p,n_mismatch,target_eer,n,n_eer,log10_far,log10_frr,p_inter,p_intra\n";
    disc << provenance("capability", seed, params.str()) << "\n";
    disc << "n_ins,p,n_mismatch,target_eer,n,ref_n,abs_dn,rel_dn,n_eer,ref_n_eer,abs_dn_eer,"
            "log10_far,ref_log10_far,log10_frr,ref_log10_frr,within_n_2pct,within_neer_2,"
            "within_logs_0p5\n";

    for (const auto& cfg : configs) {
        for (double t : targets) {
            const auto row = min_crps_for_eer(cfg, t);
            table << cfg.n_ins << ',' << cfg.p << ',' << cfg.n_mismatch << ',' << fmt(t, 3)
                  << ',' << row.n << ',' << row.n_eer << ',' << fmt(row.log10_far, 4) << ','
                  << fmt(row.log10_frr, 4) << ',' << fmt(p_inter_analytic(cfg), 8) << ','
                  << fmt(p_intra_analytic(cfg), 8) << "\n";
            if (g.format == "json")
                json_rows.push_back({{"n_ins", cfg.n_ins},
                                     {"p", cfg.p},
                                     {"n_mismatch", cfg.n_mismatch},
                                     {"target_eer", t},
                                     {"n", row.n},
                                     {"n_eer", row.n_eer},
                                     {"log10_far", row.log10_far},
                                     {"log10_frr", row.log10_frr}});
            for (const auto& ref : reference_capability_table()) {
                if (ref.config.n_ins != cfg.n_ins || ref.config.p != cfg.p ||
                    ref.config.n_mismatch != cfg.n_mismatch || ref.target_eer != t)
                    continue;
                const int dn = std::abs(row.n - ref.n);
                const double rel = static_cast<double>(dn) / ref.n;
                const int dne = std::abs(row.n_eer - ref.n_eer);
                const bool okn = rel <= 0.02;
                const bool okne = dne <= 2;
                const bool oklog = std::abs(row.log10_far - ref.log10_far) <= 0.5 &&
                                   std::abs(row.log10_frr - ref.log10_frr) <= 0.5;
                disc << cfg.n_ins << ',' << cfg.p << ',' << cfg.n_mismatch << ',' << fmt(t, 3)
                     << ',' << row.n << ',' << ref.n << ',' << dn << ',' << fmt(rel, 4) << ','
                     << row.n_eer << ',' << ref.n_eer << ',' << dne << ','
                     << fmt(row.log10_far, 3) << ',' << ref.log10_far << ','
                     << fmt(row.log10_frr, 3) << ',' << ref.log10_frr << ',' << okn << ','
                     << okne << ',' << oklog << "\n";
            }
        }
    }
    write_file(fs::path(g.out_dir) / "capability.csv", table.str());
    write_file(fs::path(g.out_dir) / "capability_discrepancy.csv", disc.str());
    if (g.format == "json")
        write_file(fs::path(g.out_dir) / "capability.json", json_rows.dump(2) + "\n");

    if (empirical_trials > 0) {
        std::ostringstream emp, hist;
        emp << provenance("capability", seed, params.str()) << "\n";
        emp << "n_ins,p,n_mismatch,trials,p_intra_emp,p_intra_analytic,p_inter_emp,"
               "p_inter_single,p_inter_printed,p_inter_corrected,better_variant\n";
        hist << provenance("capability", seed, params.str()) << "\n";
        hist << "n_ins,p,n_mismatch,hd,inter_count,intra_count\n";
        std::uint64_t salt = 0;
        for (const auto& cfg : configs) {
            DeviceConfig dc;
            dc.k = 64;
            dc.n_ins = cfg.n_ins;
            dc.p = cfg.p;
            dc.m = 3;
            dc.xors = 0;
            const auto est = empirical_distances(dc, empirical_trials, cfg.n_mismatch,
                                                 derive_seed(seed, 0xe29ull, ++salt),
                                                 intra_puf);
            emp << cfg.n_ins << ',' << cfg.p << ',' << cfg.n_mismatch << ','
                << empirical_trials << ',' << fmt(est.p_intra, 5) << ','
                << fmt(p_intra_analytic(cfg), 5) << ',' << fmt(est.p_inter_all_pairs, 5)
                << ',' << fmt(est.p_inter_single, 5) << ',' << fmt(p_inter_analytic(cfg), 5)
                << ',' << fmt(p_inter_analytic_corrected(cfg), 5) << ','
                << est.better_inter_variant << "\n";
            for (std::size_t d = 0; d < est.inter_histogram.size(); ++d)
                hist << cfg.n_ins << ',' << cfg.p << ',' << cfg.n_mismatch << ',' << d << ','
                     << est.inter_histogram[d] << ',' << est.intra_histogram[d] << "\n";
        }
        write_file(fs::path(g.out_dir) / "empirical_distances.csv", emp.str());
        write_file(fs::path(g.out_dir) / "distance_hist.csv", hist.str());
    }
    return 0;
}

int cmd_protocol(GlobalOpts& g, int k, int m, int p, int n_ins, int xors, int n, int n_th,
                 int n_mismatch, int sessions, int impostor_sessions, double noise_target,
                 double theta_mult, const std::string& transport_name,
                 const std::string& enroll_mode) {
    const auto seed = ensure_seed(g);
    const Transport transport =
        transport_name == "socket" ? Transport::Socket : Transport::InProc;

    const auto cal =
        noise_target > 0
            ? calibrate_noise(k, noise_target, 200000, derive_seed(seed, 0xca1ull))
            : NoiseCalibration{};
    DeviceConfig dc{k, n_ins, p, m, xors, cal.sigma, 64};
    ObPufDevice dev = make_device(dc, derive_seed(seed, 0xdeull));

    EnrollOptions eo;
    eo.mode = enroll_mode == "learned" ? EnrollMode::Learned : EnrollMode::Ideal;
    eo.reliable_sessions = sessions + impostor_sessions + 4;
    eo.theta = theta_mult * cal.sigma;
    eo.seed = derive_seed(seed, 0xe4011ull);
    ServerModel server = enroll(dev, eo);

    AuthParams params{n, n_th, n_mismatch};
    std::vector<SessionTranscript> transcripts;
    int genuine_accepts = 0;
    for (int s = 0; s < sessions; ++s) {
        auto tr = run_local_session(server, dev, params, derive_seed(seed, 0x9e4ull, s),
                                    noise_target > 0, transport);
        genuine_accepts += tr.accepted;
        transcripts.push_back(std::move(tr));
    }

    // Impostors present a fresh device against the same server record; the
    // server's reliable pool keeps being consumed.
    int impostor_accepts = 0;
    for (int s = 0; s < impostor_sessions; ++s) {
        ObPufDevice imp = make_device_with_patterns(dev.base_patterns, xors, cal.sigma,
                                                    derive_seed(seed, 0x1b905ull, s),
                                                    xors == 0);
        auto tr = run_local_session(server, imp, params, derive_seed(seed, 0x1b9e4ull, s),
                                    noise_target > 0, transport);
        impostor_accepts += tr.accepted;
        transcripts.push_back(std::move(tr));
    }

    std::ostringstream params_str;
    params_str << "k=" << k << " m=" << m << " p=" << p << " n_ins=" << n_ins
               << " xors=" << xors << " n=" << n << " n_th=" << n_th
               << " n_mismatch=" << n_mismatch << " sessions=" << sessions
               << " impostors=" << impostor_sessions << " noise_target=" << noise_target
               << " transport=" << transport_name << " enroll=" << enroll_mode;

    write_file(fs::path(g.out_dir) / "transcripts.jsonl", transcripts_to_jsonl(transcripts));
    write_file(fs::path(g.out_dir) / "enrollment.json", to_json(server).dump() + "\n");

    std::ostringstream summary;
    summary << provenance("protocol", seed, params_str.str()) << "\n";
    summary << "population,sessions,accepts,rejects\n";
    summary << "genuine," << sessions << ',' << genuine_accepts << ','
            << (sessions - genuine_accepts) << "\n";
    summary << "impostor," << impostor_sessions << ',' << impostor_accepts << ','
            << (impostor_sessions - impostor_accepts) << "\n";
    write_file(fs::path(g.out_dir) / "protocol_summary.csv", summary.str());

    std::cout << "genuine: " << genuine_accepts << "/" << sessions << " accepted\n"
              << "impostor: " << impostor_accepts << "/" << impostor_sessions
              << " accepted\n";
    return 0;
}

int cmd_attack(GlobalOpts& g, CampaignConfig base, int runs, bool fig8) {
    const auto seed = ensure_seed(g);
    base.trace_p_pred = fig8;
    nlohmann::json json_rows = nlohmann::json::array();

    std::ostringstream params;
    params << "family=" << base.family << " n_ins=" << base.n_ins << " p=" << base.p
           << " m=" << base.m << " xors=" << base.xors << " sessions=" << base.sessions
           << " rounds=" << base.rounds << " generations=" << base.generations
           << " runs=" << runs << " joint=" << base.joint;

    std::ostringstream table, timing;
    table << provenance("attack", seed, params.str()) << "\n";
    table << "run,family,n_ins,p,m,xors,sessions,generations,rounds,p_pred,"
             "p_pred_best_pattern,p_min,fitness\n";
    timing << provenance("attack", seed, params.str()) << "\n";
    timing << "run,wall_seconds\n";

    for (int r = 0; r < runs; ++r) {
        CampaignConfig cfg = base;
        cfg.seed = derive_seed(seed, 0x4711ull, r);
        const auto rep = run_attack_campaign(cfg);
        const auto& rc = rep.config;
        table << r << ',' << rc.family << ',' << rc.n_ins << ',' << rc.p << ',' << rc.m << ','
              << rc.xors << ',' << rc.sessions << ',' << rc.generations << ',' << rc.rounds
              << ',' << fmt(rep.p_pred) << ',' << fmt(rep.p_pred_best_pattern) << ','
              << fmt(rep.p_min) << ',' << fmt(rep.fitness) << "\n";
        timing << r << ',' << fmt(rep.wall_seconds, 3) << "\n";
        if (g.format == "json")
            json_rows.push_back({{"run", r},
                                 {"family", rc.family},
                                 {"n_ins", rc.n_ins},
                                 {"p", rc.p},
                                 {"m", rc.m},
                                 {"xors", rc.xors},
                                 {"sessions", rc.sessions},
                                 {"generations", rc.generations},
                                 {"rounds", rc.rounds},
                                 {"p_pred", rep.p_pred},
                                 {"p_pred_best_pattern", rep.p_pred_best_pattern},
                                 {"p_min", rep.p_min},
                                 {"fitness", rep.fitness}});

        std::ostringstream trace;
        trace << provenance("attack", cfg.seed, params.str()) << "\n";
        trace << "generation,best_fitness" << (fig8 ? ",p_pred" : "") << "\n";
        for (std::size_t i = 0; i < rep.trace.size(); ++i) {
            trace << i << ',' << fmt(rep.trace[i]);
            if (fig8 && i < rep.p_pred_trace.size()) trace << ',' << fmt(rep.p_pred_trace[i]);
            trace << "\n";
        }
        write_file(fs::path(g.out_dir) / ("trace_run" + std::to_string(r) + ".csv"),
                   trace.str());
        std::cout << "run " << r << ": P_pred=" << rep.p_pred << " (P_min=" << rep.p_min
                  << "), fitness=" << rep.fitness << ", " << rep.wall_seconds << "s\n";
    }
    write_file(fs::path(g.out_dir) / "campaign.csv", table.str());
    write_file(fs::path(g.out_dir) / "campaign_timing.csv", timing.str());
    if (g.format == "json")
        write_file(fs::path(g.out_dir) / "campaign.json", json_rows.dump(2) + "\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Obfuscated arbiter-PUF authentication workbench"};
    app.require_subcommand(1);

    GlobalOpts g;
    std::string config_path;
    app.add_option("--config", config_path, "JSON file with flag defaults");
    app.add_option("--seed", g.seed, "global RNG seed")->each([&](const std::string&) {
        g.seed_set = true;
    });
    app.add_option("--out", g.out_dir, "output directory");
    app.add_option("--format", g.format, "csv|json")
        ->check(CLI::IsMember({"csv", "json"}));

    // design
    int k = 64, m = 3, p = 4, n_ins = 4, budget = 64;
    std::size_t samples = 10000;
    bool adversarial = false;
    auto* design = app.add_subcommand("design", "search a pattern set and report FHD stats");
    design->add_option("--k", k);
    design->add_option("--m", m);
    design->add_option("--p", p);
    design->add_option("--n-ins", n_ins);
    design->add_option("--trial-budget", budget);
    design->add_option("--samples", samples);
    design->add_flag("--adversarial-first-positions", adversarial,
                     "score the degenerate first-positions layout instead");

    // capability
    double intra_puf = 0.05;
    std::size_t empirical_trials = 0;
    std::string targets = "1e-6,1e-9,1e-12";
    std::string configs = "2,2,0;4,2,0;4,4,0;8,4,0;8,4,1;16,4,0;16,4,1";
    auto* capability = app.add_subcommand("capability", "analytic (n, n_EER, FAR, FRR) table");
    capability->add_option("--intra-puf", intra_puf);
    capability->add_option("--targets", targets);
    capability->add_option("--configs", configs, "n_ins,p,n_mismatch;... list");
    capability->add_option("--empirical-trials", empirical_trials,
                           "also Monte-Carlo the estimators and emit distance histograms");

    // protocol
    int pk = 64, pm = 3, pp = 4, pn_ins = 8, pxors = 2;
    int n = 42, n_th = 30, n_mismatch = 0, sessions = 100, impostors = 0;
    double noise_target = 0.05, theta_mult = 5.0;
    std::string transport = "inproc", enroll_mode = "ideal";
    auto* protocol = app.add_subcommand("protocol", "run authentication sessions");
    protocol->add_option("--k", pk);
    protocol->add_option("--m", pm);
    protocol->add_option("--p", pp);
    protocol->add_option("--n-ins", pn_ins);
    protocol->add_option("--xors", pxors);
    protocol->add_option("--n", n, "rounds per session");
    protocol->add_option("--n-th", n_th, "accept threshold on mismatching rounds");
    protocol->add_option("--n-mismatch", n_mismatch, "per-round HD tolerance");
    protocol->add_option("--sessions", sessions, "genuine sessions");
    protocol->add_option("--impostor-sessions", impostors);
    protocol->add_option("--noise-target", noise_target,
                         "per-bit repeat disagreement rate; 0 = noiseless");
    protocol->add_option("--theta-mult", theta_mult, "reliable threshold in noise sigmas");
    protocol->add_option("--transport", transport)->check(CLI::IsMember({"inproc", "socket"}));
    protocol->add_option("--enroll", enroll_mode)->check(CLI::IsMember({"ideal", "learned"}));

    // attack
    CampaignConfig ac;
    int runs = 1;
    bool fig8 = false, per_bit = false;
    auto* attack = app.add_subcommand("attack", "model-building attack campaign");
    attack->add_option("--family", ac.family)
        ->check(CLI::IsMember({"fixed", "reconfigurable", "apuf-baseline"}));
    attack->add_option("--k", ac.k);
    attack->add_option("--n-ins", ac.n_ins);
    attack->add_option("--p", ac.p);
    attack->add_option("--m", ac.m);
    attack->add_option("--xors", ac.xors);
    attack->add_option("--sessions", ac.sessions);
    attack->add_option("--rounds", ac.rounds);
    attack->add_option("--generations", ac.generations);
    attack->add_option("--population", ac.population, "0 = strategy default");
    attack->add_option("--restarts", ac.restarts,
                       "strategy restarts per run; best training fitness wins");
    attack->add_option("--baseline-crps", ac.baseline_crps);
    attack->add_option("--test-crps", ac.test_crps);
    attack->add_option("--runs", runs, "independent runs (seed + run index)");
    attack->add_flag("--fig8", fig8, "record a per-generation prediction-accuracy trace");
    attack->add_flag("--per-bit", per_bit, "model each PUF-block instance separately");

    try {
        apply_config_file(app, g, argc, argv);
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (design->parsed())
            return cmd_design(g, k, m, p, n_ins, budget, samples, adversarial);
        if (capability->parsed())
            return cmd_capability(g, intra_puf, targets, configs, empirical_trials);
        if (protocol->parsed())
            return cmd_protocol(g, pk, pm, pp, pn_ins, pxors, n, n_th, n_mismatch, sessions,
                                impostors, noise_target, theta_mult, transport, enroll_mode);
        if (attack->parsed()) {
            ac.joint = !per_bit;
            return cmd_attack(g, ac, runs, fig8);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
