#pragma once

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "topos/simnet.hpp"

// Scenario library, trace auditing, and parameter sweeps backing the CLI
// and the acceptance experiments.
namespace topos::harness {

using simnet::json;

// ------------------------------------------------------- scenario schema

// Scenario JSON, schema version 1:
// {
//   "schema": 1, "name": "...", "n": 200, "f": 0.0, "seed": 1,
//   "repetitions": 100, "horizon": 100000, "K": 4.0,
//   "validate_at_prb": false,
//   "subnets": [{
//     "t": 2, "members": [0,1,2], "submitter": 0,
//     "initial_balances": {"alice": {"tok": 100}},
//     "submissions": [{"time": 10, "txs": [
//        {"kind":"local","from":"alice","to":"bob","asset":"tok","amount":1},
//        {"kind":"transfer","target":1,"asset":"tok","to":"dora","amount":7}
//     ]}]
//   }],
//   "adversary": {
//     "equivocations": [{"subnet":0,"submission":0,"alt_txs":[...]}],
//     "mute": [27,28], "delayed": [5], "delay_factor": 4.0,
//     "bogus_certs": [{"subnet":0,"time":10,"kind":0}],
//     "bad_shares": [{"subnet":0,"dealer":2,"victim":3}],
//     "bad_responses": [{"subnet":0,"submission":0,"signer":3}]
//   },
//   "assertions": {
//     "delivery_rate_min": 1.0, "consistency_violations_max": 0,
//     "weak_causal_violations_max": 0, "conservation": true,
//     "min_full_delivery_runs": 99
//   }
// }

struct Assertions {
    std::optional<double> delivery_rate_min;
    std::optional<uint64_t> consistency_violations_max;
    std::optional<uint64_t> weak_causal_violations_max;
    bool conservation = false;
    std::optional<uint64_t> min_full_delivery_runs;  // across repetitions
};

struct Scenario {
    std::string name;
    simnet::SimConfig config;  // template; per-repetition seed = seed + i
    uint64_t repetitions = 1;
    Assertions assertions;
};

inline cert::Transaction parse_tx(const json& j) {
    std::string kind = j.at("kind");
    if (kind == "local")
        return cert::Transaction::local(j.at("from"), j.at("to"), j.at("asset"),
                                        j.at("amount"));
    if (kind == "transfer")
        return cert::Transaction::outbound(
            j.value("from", std::string("alice")),
            cert::CrossSubnetMessage::transfer(simnet::subnet_ref(j.at("target")),
                                               j.at("asset"), j.at("to"), j.at("amount")));
    if (kind == "call")
        return cert::Transaction::outbound(
            j.value("from", std::string("alice")),
            cert::CrossSubnetMessage::call(simnet::subnet_ref(j.at("target")),
                                           j.at("contract"), j.at("func"), Bytes{}));
    throw std::invalid_argument("unknown tx kind: " + kind);
}

inline std::vector<cert::Transaction> parse_txs(const json& j) {
    std::vector<cert::Transaction> out;
    for (const auto& t : j) out.push_back(parse_tx(t));
    return out;
}

inline Scenario parse_scenario(const json& j) {
    if (j.value("schema", 1) != 1) throw std::invalid_argument("unsupported schema version");
    Scenario sc;
    sc.name = j.value("name", "unnamed");
    sc.repetitions = j.value("repetitions", 1);
    auto& cfg = sc.config;
    cfg.n = j.at("n");
    cfg.f = j.value("f", 0.0);
    cfg.seed = j.value("seed", 1);
    cfg.horizon = j.value("horizon", 100000.0);
    cfg.K = j.value("K", 4.0);
    cfg.validate_at_prb = j.value("validate_at_prb", false);
    json subnets_j = j.value("subnets", json::array());
    for (const auto& sj : subnets_j) {
        simnet::SubnetSpec sn;
        sn.t = sj.value("t", 2);
        for (const auto& m : sj.at("members")) sn.members.push_back(m.get<uint32_t>());
        sn.submitter = sj.at("submitter");
        json balances_j = sj.value("initial_balances", json::object());
        for (const auto& [acct, assets] : balances_j.items())
            for (const auto& [asset, amount] : assets.items())
                sn.initial_state.balances[{acct, asset}] = amount.get<uint64_t>();
        json submissions_j = sj.value("submissions", json::array());
        for (const auto& sub : submissions_j)
            sn.submissions.push_back(
                {sub.at("time"), parse_txs(sub.value("txs", json::array()))});
        cfg.subnets.push_back(std::move(sn));
    }
    if (j.contains("adversary")) {
        const auto& a = j["adversary"];
        json eq_j = a.value("equivocations", json::array());
        for (const auto& e : eq_j)
            cfg.adversary.equivocations.push_back(
                {e.at("subnet"), e.at("submission"),
                 parse_txs(e.value("alt_txs", json::array()))});
        json mute_j = a.value("mute", json::array());
        for (const auto& m : mute_j)
            cfg.adversary.mute.insert(m.get<uint32_t>());
        json delayed_j = a.value("delayed", json::array());
        for (const auto& d : delayed_j)
            cfg.adversary.delayed.insert(d.get<uint32_t>());
        cfg.adversary.delay_factor = a.value("delay_factor", 1.0);
        json bogus_j = a.value("bogus_certs", json::array());
        for (const auto& b : bogus_j)
            cfg.adversary.bogus_certs.push_back(
                {b.at("subnet"), b.at("time"),
                 static_cast<simnet::BogusCert::Kind>(b.value("kind", 0))});
        json shares_j = a.value("bad_shares", json::array());
        for (const auto& b : shares_j)
            cfg.adversary.bad_shares.push_back(
                {b.at("subnet"), b.at("dealer"), b.value("victim", 1u)});
        json resp_j = a.value("bad_responses", json::array());
        for (const auto& b : resp_j)
            cfg.adversary.bad_responses.push_back(
                {b.at("subnet"), b.at("submission"), b.at("signer")});
    }
    if (j.contains("assertions")) {
        const auto& a = j["assertions"];
        auto& as = sc.assertions;
        if (a.contains("delivery_rate_min")) as.delivery_rate_min = a["delivery_rate_min"];
        if (a.contains("consistency_violations_max"))
            as.consistency_violations_max = a["consistency_violations_max"];
        if (a.contains("weak_causal_violations_max"))
            as.weak_causal_violations_max = a["weak_causal_violations_max"];
        as.conservation = a.value("conservation", false);
        if (a.contains("min_full_delivery_runs"))
            as.min_full_delivery_runs = a["min_full_delivery_runs"];
    }
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open scenario file: " + path);
    json j = json::parse(in);
    return parse_scenario(j);
}

// ------------------------------------------------------- trace replaying

struct ParsedTrace {
    std::vector<simnet::DeliverRecord> deliveries;
    std::map<Bytes, Digest32> genesis;
    std::set<prb::ProcessId> correct;
    std::vector<json> submits;
    std::map<size_t, std::map<std::string, uint64_t>> initial_totals;  // subnet -> asset -> supply
    std::optional<json> summary;
};

inline Digest32 digest_from_hex(const std::string& h) {
    Digest32 d{};
    auto b = from_hex(h);
    if (b && b->size() == 32) std::copy(b->begin(), b->end(), d.begin());
    return d;
}

inline ParsedTrace parse_trace_lines(const std::vector<std::string>& lines) {
    ParsedTrace out;
    std::set<prb::ProcessId> bad;
    size_t n = 0;
    for (const auto& line : lines) {
        json j = json::parse(line);
        std::string type = j.value("type", "");
        if (type == "run-config") {
            n = j.at("n");
            json byz_j = j.value("byzantine", json::array());
            for (const auto& p : byz_j)
                bad.insert(p.get<uint32_t>());
            json muted_j = j.value("muted", json::array());
            for (const auto& p : muted_j)
                bad.insert(p.get<uint32_t>());
        } else if (type == "dkg") {
            auto key = from_hex(j.at("key"));
            if (key && !key->empty()) out.genesis[*key] = digest_from_hex(j.at("genesis"));
            size_t sn = j.at("subnet");
            json totals_j = j.value("asset_totals", json::object());
            for (const auto& [asset, total] : totals_j.items())
                out.initial_totals[sn][asset] = total.get<uint64_t>();
        } else if (type == "wcprb-deliver") {
            simnet::DeliverRecord r;
            r.process = j.at("process");
            r.time = j.at("time");
            r.cert_digest = digest_from_hex(j.at("cert"));
            r.subnet_key = *from_hex(j.at("subnet"));
            r.prev = digest_from_hex(j.at("prev"));
            r.next = digest_from_hex(j.at("next"));
            json deps_j = j.value("deps", json::array());
            for (const auto& d : deps_j)
                r.deps.push_back(digest_from_hex(d.get<std::string>()));
            r.pending_size = j.at("pending");
            out.deliveries.push_back(std::move(r));
        } else if (type == "submit") {
            out.submits.push_back(j);
        } else if (type == "summary") {
            out.summary = j;
        }
    }
    for (prb::ProcessId p = 0; p < n; ++p)
        if (!bad.contains(p)) out.correct.insert(p);
    return out;
}

inline ParsedTrace load_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open trace file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(line);
    return parse_trace_lines(lines);
}

// Burn-mint conservation: at every accepted submission, per-asset global
// supply (subnet balance totals plus in-flight burns) must be constant.
// Returns the number of trace points violating it.
inline uint64_t audit_conservation(
    const std::vector<json>& submits,
    const std::map<size_t, std::map<std::string, uint64_t>>& initial_totals) {
    // Start each subnet at its genesis totals, then replace a subnet's totals
    // with the snapshot carried by each accepted submission.
    std::map<size_t, std::map<std::string, uint64_t>> per_subnet = initial_totals;
    std::map<std::string, int64_t> inflight;  // burned but not yet minted
    std::map<std::string, int64_t> baseline;
    for (const auto& [s, totals] : per_subnet)
        for (const auto& [asset, total] : totals)
            baseline[asset] += static_cast<int64_t>(total);
    uint64_t violations = 0;
    for (const auto& j : submits) {
        if (!j.value("accepted", false)) continue;
        size_t s = j.at("subnet");
        per_subnet[s].clear();
        for (const auto& [asset, total] : j.at("asset_totals").items())
            per_subnet[s][asset] = total.get<uint64_t>();
        for (const auto& [asset, amt] : j.at("burned").items())
            inflight[asset] += amt.get<int64_t>();
        for (const auto& [asset, amt] : j.at("minted").items())
            inflight[asset] -= amt.get<int64_t>();
        std::map<std::string, int64_t> global = inflight;
        for (const auto& [s2, totals] : per_subnet)
            for (const auto& [asset, total] : totals)
                global[asset] += static_cast<int64_t>(total);
        for (const auto& [asset, total] : global) {
            auto it = baseline.find(asset);
            int64_t expect = it == baseline.end() ? 0 : it->second;
            if (total != expect) ++violations;
        }
    }
    return violations;
}

// ------------------------------------------------------ scenario running

struct RunOutcome {
    uint64_t seed = 0;
    simnet::MetricsSummary metrics;
    Digest32 trace_hash{};
    uint64_t conservation_violations = 0;
    bool full_delivery = false;
    std::vector<std::string> trace;
};

struct ScenarioReport {
    std::string name;
    std::vector<RunOutcome> runs;
    bool passed = true;
    std::vector<std::string> failures;
};

inline RunOutcome execute_run(const simnet::SimConfig& cfg, bool keep_trace,
                              bool check_conservation) {
    simnet::Simulation sim(cfg);
    sim.run();
    RunOutcome out;
    out.seed = cfg.seed;
    out.metrics = sim.metrics();
    out.trace_hash = sim.trace_hash();
    out.full_delivery = out.metrics.delivery_rate == 1.0;
    if (check_conservation) {
        auto parsed = parse_trace_lines(sim.trace());
        out.conservation_violations = audit_conservation(parsed.submits, parsed.initial_totals);
    }
    if (keep_trace) out.trace = sim.trace();
    return out;
}

// Repetitions fan out across worker threads; the reduction below is
// order-independent, so results are identical to a serial run.
inline ScenarioReport run_scenario(const Scenario& sc, bool keep_traces = false,
                                   unsigned workers = 0) {
    ScenarioReport rep;
    rep.name = sc.name;
    rep.runs.resize(sc.repetitions);
    if (workers == 0)
        workers = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                                  static_cast<unsigned>(sc.repetitions)));
    std::atomic<uint64_t> next{0};
    auto worker = [&] {
        for (;;) {
            uint64_t i = next.fetch_add(1);
            if (i >= sc.repetitions) return;
            simnet::SimConfig cfg = sc.config;
            cfg.seed = sc.config.seed + i;
            rep.runs[i] = execute_run(cfg, keep_traces, sc.assertions.conservation);
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    const auto& as = sc.assertions;
    uint64_t full = 0;
    for (const auto& r : rep.runs) {
        if (r.full_delivery) ++full;
        auto fail = [&](const std::string& what) {
            rep.passed = false;
            rep.failures.push_back("seed " + std::to_string(r.seed) + ": " + what);
        };
        if (as.delivery_rate_min && r.metrics.delivery_rate < *as.delivery_rate_min)
            fail("delivery_rate " + std::to_string(r.metrics.delivery_rate));
        if (as.consistency_violations_max &&
            r.metrics.consistency_violations > *as.consistency_violations_max)
            fail("consistency_violations " +
                 std::to_string(r.metrics.consistency_violations));
        if (as.weak_causal_violations_max &&
            r.metrics.weak_causal_violations > *as.weak_causal_violations_max)
            fail("weak_causal_violations " +
                 std::to_string(r.metrics.weak_causal_violations));
        if (as.conservation && r.conservation_violations > 0)
            fail("conservation_violations " + std::to_string(r.conservation_violations));
    }
    if (as.min_full_delivery_runs && full < *as.min_full_delivery_runs) {
        rep.passed = false;
        rep.failures.push_back("full-delivery runs " + std::to_string(full) + " < " +
                               std::to_string(*as.min_full_delivery_runs));
    }
    return rep;
}

inline json report_to_json(const ScenarioReport& rep) {
    json j;
    j["name"] = rep.name;
    j["runs"] = rep.runs.size();
    j["passed"] = rep.passed;
    j["failures"] = rep.failures;
    double rate = 0;
    uint64_t cons = 0, causal = 0, full = 0;
    for (const auto& r : rep.runs) {
        rate += r.metrics.delivery_rate;
        cons += r.metrics.consistency_violations;
        causal += r.metrics.weak_causal_violations;
        if (r.full_delivery) ++full;
    }
    j["mean_delivery_rate"] = rep.runs.empty() ? 0 : rate / static_cast<double>(rep.runs.size());
    j["consistency_violations"] = cons;
    j["weak_causal_violations"] = causal;
    j["full_delivery_runs"] = full;
    return j;
}

// ----------------------------------------------------------- sweep

struct SweepPoint {
    size_t n = 0;
    double mean_messages_per_process_per_broadcast = 0;
    double stddev = 0;
    size_t reps = 0;
};

struct SweepReport {
    std::vector<SweepPoint> points;
    double measured_ratio = 0;   // largest-n mean / smallest-n mean
    double predicted_ratio = 0;  // ln(largest) / ln(smallest)
    double relative_error = 0;
    bool within_tolerance = false;
};

// One honest broadcast per run; per-process protocol messages (samples,
// gossip, echo, ready) divided by n give the per-process cost.
inline simnet::SimConfig sweep_config(size_t n, uint64_t seed, double K) {
    simnet::SimConfig cfg;
    cfg.n = n;
    cfg.seed = seed;
    cfg.K = K;
    simnet::SubnetSpec sn;
    sn.t = 2;
    sn.members = {0, 1, 2};
    sn.submitter = 0;
    sn.initial_state.balances[{"alice", "tok"}] = 100;
    sn.submissions.push_back({10.0, {cert::Transaction::local("alice", "bob", "tok", 1)}});
    cfg.subnets.push_back(std::move(sn));
    return cfg;
}

inline SweepReport sweep_message_complexity(std::vector<size_t> ns, size_t reps,
                                            uint64_t seed_base, double tolerance = 0.30,
                                            std::optional<prb::SampleConfig> fixed = {},
                                            unsigned workers = 0) {
    if (ns.size() < 3) throw std::invalid_argument("sweep needs at least 3 n values");
    std::sort(ns.begin(), ns.end());
    SweepReport rep;
    for (size_t n : ns) {
        std::vector<double> means(reps);
        std::atomic<uint64_t> next{0};
        auto worker = [&] {
            for (;;) {
                uint64_t i = next.fetch_add(1);
                if (i >= reps) return;
                auto cfg = sweep_config(n, seed_base + i, 4.0);
                cfg.sample_override = fixed;
                simnet::Simulation sim(cfg);
                sim.run();
                means[i] = sim.metrics().mean_messages_per_process;
            }
        };
        unsigned w = workers ? workers
                             : std::max(1u, std::min<unsigned>(
                                                std::thread::hardware_concurrency(),
                                                static_cast<unsigned>(reps)));
        std::vector<std::thread> pool;
        for (unsigned k = 0; k < w; ++k) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
        double mean = 0;
        for (double m : means) mean += m;
        mean /= static_cast<double>(reps);
        double var = 0;
        for (double m : means) var += (m - mean) * (m - mean);
        var = reps > 1 ? var / static_cast<double>(reps - 1) : 0;
        rep.points.push_back({n, mean, std::sqrt(var), reps});
    }
    const auto& lo = rep.points.front();
    const auto& hi = rep.points.back();
    rep.measured_ratio = hi.mean_messages_per_process_per_broadcast /
                         lo.mean_messages_per_process_per_broadcast;
    rep.predicted_ratio = std::log(static_cast<double>(hi.n)) /
                          std::log(static_cast<double>(lo.n));
    rep.relative_error =
        std::abs(rep.measured_ratio - rep.predicted_ratio) / rep.predicted_ratio;
    rep.within_tolerance = rep.relative_error <= tolerance;
    return rep;
}

}  // namespace topos::harness
