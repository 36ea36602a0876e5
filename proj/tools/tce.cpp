// tce — simulator and utility CLI.
//
// Subcommands: run-scenario, sweep, keygen-demo, sign-demo, verify-cert,
// report. Exit codes: 0 success, 1 assertion/verification failure, 2 usage
// or configuration error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "topos/harness.hpp"

using namespace topos;
using simnet::json;

namespace {

using Group = simnet::Group;

int cmd_run_scenario(const std::string& path, std::optional<uint64_t> seed,
                     std::optional<double> horizon, bool validate_at_prb,
                     const std::string& trace_out, unsigned workers) {
    harness::Scenario sc;
    try {
        sc = harness::load_scenario(path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    if (seed) sc.config.seed = *seed;
    if (horizon) sc.config.horizon = *horizon;
    if (validate_at_prb) sc.config.validate_at_prb = true;

    auto rep = harness::run_scenario(sc, !trace_out.empty(), workers);
    if (!trace_out.empty()) {
        for (const auto& run : rep.runs) {
            std::ofstream out(trace_out + "." + std::to_string(run.seed) + ".jsonl");
            for (const auto& line : run.trace) out << line << "\n";
        }
    }
    std::cout << harness::report_to_json(rep).dump(2) << "\n";
    for (const auto& f : rep.failures) std::cerr << "assertion failed: " << f << "\n";
    return rep.passed ? 0 : 1;
}

int cmd_sweep(const std::string& ns_csv, size_t reps, uint64_t seed, double tolerance,
              bool fixed_samples, unsigned workers) {
    std::vector<size_t> ns;
    std::stringstream ss(ns_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            ns.push_back(std::stoul(item));
        } catch (const std::exception&) {
            std::cerr << "error: bad n value '" << item << "'\n";
            return 2;
        }
    }
    if (ns.size() < 3) {
        std::cerr << "error: sweep needs at least 3 n values\n";
        return 2;
    }
    std::optional<prb::SampleConfig> fixed;
    if (fixed_samples) fixed = prb::SampleConfig::from_n(ns.front(), 4.0);  // control run
    auto rep = harness::sweep_message_complexity(ns, reps, seed, tolerance, fixed, workers);
    std::cout << "n,mean_messages_per_process,stddev,reps\n";
    for (const auto& p : rep.points)
        std::cout << p.n << "," << p.mean_messages_per_process_per_broadcast << ","
                  << p.stddev << "," << p.reps << "\n";
    std::cout << "measured_ratio=" << rep.measured_ratio
              << " predicted_ratio=" << rep.predicted_ratio
              << " relative_error=" << rep.relative_error
              << " verdict=" << (rep.within_tolerance ? "PASS" : "FAIL") << "\n";
    return rep.within_tolerance ? 0 : 1;
}

int cmd_keygen_demo(uint32_t t, uint32_t n, uint64_t seed) {
    if (t == 0 || t > n) {
        std::cerr << "error: need 1 <= t <= n\n";
        return 2;
    }
    CounterRng rng(seed);
    ice_frost::Context ctx{"keygen-demo", 0, Bytes{'d', 'e', 'm', 'o'}};
    auto result = ice_frost::run_keygen<Group>(t, n, ctx, rng);
    if (result.keys.empty()) {
        std::cerr << "keygen aborted\n";
        return 1;
    }
    const auto& any = result.keys.begin()->second;
    std::cout << "group key Y = " << to_hex(Group::element_encode(any.group_key)) << "\n";
    for (const auto& [i, km] : result.keys)
        std::cout << "  Y_" << i << " = " << to_hex(Group::element_encode(km.verification_share))
                  << "\n";
    return 0;
}

int cmd_sign_demo(uint64_t seed, const std::string& message, const std::string& emit_cert) {
    CounterRng rng(seed);
    ice_frost::Context ctx{"sign-demo", 0, Bytes{'d', 'e', 'm', 'o'}};
    auto kg = ice_frost::run_keygen<Group>(2, 3, ctx, rng);
    if (kg.keys.empty()) {
        std::cerr << "keygen aborted\n";
        return 1;
    }
    Bytes m(message.begin(), message.end());
    std::set<ice_frost::Index> signers{1, 2};
    auto sig = ice_frost::threshold_sign<Group>(kg.keys, signers, m, rng);
    if (!sig) {
        std::cerr << "signing aborted\n";
        return 1;
    }
    bool ok = ice_frost::verify_signature<Group>(kg.keys.begin()->second.group_key, m, *sig);
    std::cout << "message   = \"" << message << "\"\n";
    std::cout << "group key = " << to_hex(Group::element_encode(kg.keys.begin()->second.group_key))
              << "\n";
    std::cout << "signature = " << to_hex(sig->encode()) << "\n";
    std::cout << "verifies  = " << (ok ? "yes" : "no") << "\n";

    if (!emit_cert.empty()) {
        cert::SubnetState prev;
        prev.balances[{"alice", "tok"}] = 100;
        std::vector<cert::Transaction> txs{cert::Transaction::local("alice", "bob", "tok", 5)};
        std::set<ice_frost::Index> all{1, 2, 3};
        auto c = cert::build_and_sign_certificate<Group>(kg.keys, all, prev, txs, rng);
        if (!c) {
            std::cerr << "certificate build failed\n";
            return 1;
        }
        auto bytes = c->encode();
        std::ofstream out(emit_cert, std::ios::binary);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        std::cout << "wrote certificate (" << bytes.size() << " bytes) to " << emit_cert << "\n";
    }
    return ok ? 0 : 1;
}

int cmd_verify_cert(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        std::cerr << "error: cannot open " << path << "\n";
        return 2;
    }
    Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto c = cert::Certificate::decode(bytes);
    if (!c) {
        std::cout << "invalid (undecodable)\n";
        return 1;
    }
    bool body_ok = cert::valid_cert(*c);
    bool sig_ok = cert::verify_cert_signature<Group>(*c);
    if (body_ok && sig_ok) {
        std::cout << "valid\n";
        return 0;
    }
    std::cout << "invalid (" << (body_ok ? "" : "certificate-check ")
              << (sig_ok ? "" : "signature") << ")\n";
    return 1;
}

int cmd_report(const std::vector<std::string>& paths) {
    std::cout << "trace,deliveries,consistency_violations,weak_causal_violations,"
                 "conservation_violations\n";
    uint64_t total_violations = 0;
    for (const auto& path : paths) {
        harness::ParsedTrace t;
        try {
            t = harness::load_trace(path);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 2;
        }
        auto cons = simnet::audit_consistency(t.deliveries, t.correct);
        auto causal = simnet::audit_weak_causal_order(t.deliveries, t.genesis, t.correct);
        auto conservation = harness::audit_conservation(t.submits, t.initial_totals);
        total_violations += cons + causal + conservation;
        std::cout << path << "," << t.deliveries.size() << "," << cons << "," << causal << ","
                  << conservation << "\n";
    }
    return total_violations == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Topos TCE simulator and utilities"};
    app.require_subcommand(1);

    std::optional<uint64_t> g_seed;
    std::optional<double> g_horizon;
    bool g_validate_at_prb = false;
    app.add_option("--seed", g_seed, "override the run seed");
    app.add_option("--horizon", g_horizon, "override the event-time horizon");
    app.add_flag("--validate-at-prb", g_validate_at_prb,
                 "run certificate validation at the PRB gossip gate");

    // run-scenario
    std::string scenario_path, trace_out;
    unsigned workers = 0;
    auto* run = app.add_subcommand("run-scenario", "execute a scenario JSON file");
    run->add_option("file", scenario_path, "scenario file")->required();
    run->add_option("--trace-out", trace_out, "prefix for per-run JSONL trace files");
    run->add_option("--workers", workers, "worker threads (0 = auto)");

    // sweep
    std::string ns_csv = "128,512,2048";
    size_t sweep_reps = 20;
    double tolerance = 0.30;
    bool fixed_samples = false;
    auto* sweep = app.add_subcommand("sweep", "message-complexity sweep over n");
    sweep->add_option("--n", ns_csv, "comma-separated process counts (>=3)");
    sweep->add_option("--reps", sweep_reps, "repetitions per point");
    sweep->add_option("--tolerance", tolerance, "relative tolerance for the ln-ratio fit");
    sweep->add_flag("--fixed-samples", fixed_samples,
                    "control: pin sample sizes so the ratio should be ~1");
    sweep->add_option("--workers", workers, "worker threads (0 = auto)");

    // keygen-demo
    uint32_t kg_t = 2, kg_n = 3;
    auto* kg = app.add_subcommand("keygen-demo", "run a DKG and print the keys");
    kg->add_option("--t", kg_t, "threshold");
    kg->add_option("--n", kg_n, "participants");

    // sign-demo
    std::string message = "hello topos", emit_cert;
    auto* sd = app.add_subcommand("sign-demo", "threshold-sign a message (t=2, n=3)");
    sd->add_option("--message", message, "message to sign");
    sd->add_option("--emit-cert", emit_cert, "also write a signed demo certificate here");

    // verify-cert
    std::string cert_path;
    auto* vc = app.add_subcommand("verify-cert", "verify a binary certificate file");
    vc->add_option("file", cert_path, "certificate file")->required();

    // report
    std::vector<std::string> trace_paths;
    auto* rp = app.add_subcommand("report", "audit JSONL trace files");
    rp->add_option("traces", trace_paths, "trace files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage errors exit 2; --help exits 0
    }

    uint64_t seed = g_seed.value_or(1);
    try {
        if (run->parsed())
            return cmd_run_scenario(scenario_path, g_seed, g_horizon, g_validate_at_prb,
                                    trace_out, workers);
        if (sweep->parsed())
            return cmd_sweep(ns_csv, sweep_reps, seed, tolerance, fixed_samples, workers);
        if (kg->parsed()) return cmd_keygen_demo(kg_t, kg_n, seed);
        if (sd->parsed()) return cmd_sign_demo(seed, message, emit_cert);
        if (vc->parsed()) return cmd_verify_cert(cert_path);
        if (rp->parsed()) return cmd_report(trace_paths);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
