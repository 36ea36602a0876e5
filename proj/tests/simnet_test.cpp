#include <catch2/catch_amalgamated.hpp>

#include "topos/simnet.hpp"

using namespace topos;
using namespace topos::simnet;

namespace {

cert::SubnetState funded_state(uint64_t amount = 100) {
    cert::SubnetState s;
    s.balances[{"alice", "tok"}] = amount;
    return s;
}

SimConfig one_subnet_config(size_t n, uint64_t seed, size_t submissions = 1) {
    SimConfig cfg;
    cfg.n = n;
    cfg.seed = seed;
    SubnetSpec sn;
    sn.t = 2;
    sn.members = {0, 1, 2};
    sn.submitter = 0;
    sn.initial_state = funded_state();
    for (size_t k = 0; k < submissions; ++k) {
        sn.submissions.push_back(
            {10.0 + 20.0 * static_cast<double>(k),
             {cert::Transaction::local("alice", "bob", "tok", 1)}});
    }
    cfg.subnets.push_back(std::move(sn));
    return cfg;
}

size_t count_deliverers(const Simulation& sim, const Digest32& cert_digest) {
    std::set<prb::ProcessId> procs;
    for (const auto& r : sim.deliveries())
        if (r.cert_digest == cert_digest) procs.insert(r.process);
    return procs.size();
}

}  // namespace

TEST_CASE("honest run: every process wcprb-delivers the certificate") {
    auto cfg = one_subnet_config(6, 11);
    Simulation sim(cfg);
    sim.run();

    REQUIRE(sim.metrics().honest_submissions == 1);
    std::set<prb::ProcessId> deliverers;
    for (const auto& r : sim.deliveries()) deliverers.insert(r.process);
    CHECK(deliverers.size() == 6);
    CHECK(sim.metrics().delivery_rate == 1.0);
    CHECK(sim.metrics().consistency_violations == 0);
    CHECK(sim.metrics().weak_causal_violations == 0);
    // every node's ledger converged to the same single-cert history
    const auto& key = sim.subnets()[0].id.key;
    for (const auto& node : sim.nodes()) {
        auto* h = node.ledger->history({key});
        REQUIRE(h != nullptr);
        CHECK(h->accepted.size() == 1);
    }
}

TEST_CASE("same seed reruns are byte-identical; different seeds differ") {
    auto cfg = one_subnet_config(12, 77, 2);
    Simulation a(cfg), b(cfg);
    a.run();
    b.run();
    REQUIRE(a.trace().size() == b.trace().size());
    CHECK(a.trace_hash() == b.trace_hash());

    cfg.seed = 78;
    Simulation c(cfg);
    c.run();
    CHECK(a.trace_hash() != c.trace_hash());
}

TEST_CASE("chained submissions deliver in chain order everywhere") {
    auto cfg = one_subnet_config(10, 5, 3);
    Simulation sim(cfg);
    sim.run();
    REQUIRE(sim.metrics().honest_submissions == 3);
    CHECK(sim.metrics().delivery_rate == 1.0);
    CHECK(sim.metrics().weak_causal_violations == 0);
    // per process: prev of each delivery equals next of the one before
    std::map<prb::ProcessId, std::vector<DeliverRecord>> per_proc;
    for (const auto& r : sim.deliveries()) per_proc[r.process].push_back(r);
    for (const auto& [p, recs] : per_proc) {
        REQUIRE(recs.size() == 3);
        for (size_t i = 1; i < recs.size(); ++i) CHECK(recs[i].prev == recs[i - 1].next);
    }
}

TEST_CASE("equivocation: at most one of two conflicting certificates survives") {
    SimConfig cfg;
    cfg.n = 30;
    cfg.f = 0.1;  // processes 27, 28, 29 are Byzantine
    cfg.seed = 1234;
    SubnetSpec sn;
    sn.t = 2;
    sn.members = {27, 28, 29};
    sn.submitter = 27;
    sn.initial_state = funded_state();
    sn.submissions.push_back({10.0, {cert::Transaction::local("alice", "bob", "tok", 10)}});
    cfg.subnets.push_back(sn);
    cfg.adversary.equivocations.push_back(
        {0, 0, {cert::Transaction::local("alice", "carol", "tok", 10)}});

    Simulation sim(cfg);
    sim.run();

    CHECK(sim.metrics().consistency_violations == 0);
    CHECK(sim.metrics().weak_causal_violations == 0);
    // the trace records the two conflicting digests; correct processes
    // delivered at most one of them, consistently
    std::set<Digest32> delivered;
    auto correct = sim.correct_processes();
    for (const auto& r : sim.deliveries())
        if (correct.contains(r.process)) delivered.insert(r.cert_digest);
    CHECK(delivered.size() <= 1);
}

TEST_CASE("registration gate drops unregistered senders") {
    auto cfg = one_subnet_config(8, 3, 0);
    Simulation sim(cfg);
    // a registered sender's garbage payload dies at the payload gate;
    // an unregistered sender dies at the registration gate before that
    prb::Message g;
    g.type = prb::Message::Type::gossip;
    g.instance = {blake2b(Bytes{1}), blake2b(Bytes{2})};
    auto junk = std::make_shared<const Bytes>(Bytes{1, 2, 3});
    g.digest = blake2b(*junk);
    g.payload = junk;
    g.sender = 999;  // never registered
    sim.inject(5.0, 0, g);
    g.sender = 1;
    sim.inject(5.0, 0, g);
    sim.run();
    CHECK(sim.metrics().gate_drops == 1);
    CHECK(sim.deliveries().empty());
}

TEST_CASE("liveness holds with a muted tenth of the network") {
    auto cfg = one_subnet_config(30, 21);
    cfg.adversary.mute = {26, 27, 28};
    Simulation sim(cfg);
    sim.run();
    auto correct = sim.correct_processes();
    CHECK(correct.size() == 27);
    std::set<prb::ProcessId> deliverers;
    for (const auto& r : sim.deliveries()) deliverers.insert(r.process);
    for (prb::ProcessId p : correct) CHECK(deliverers.contains(p));
    CHECK(sim.metrics().delivery_rate == 1.0);
}

TEST_CASE("a bad DKG share gets the dealer excluded without derailing the subnet") {
    SimConfig cfg;
    cfg.n = 8;
    cfg.seed = 9;
    SubnetSpec sn;
    sn.t = 2;
    sn.members = {0, 1, 2, 3};
    sn.submitter = 0;
    sn.initial_state = funded_state();
    sn.submissions.push_back({10.0, {}});
    cfg.subnets.push_back(sn);
    cfg.adversary.bad_shares.push_back({0, /*dealer=*/2, /*victim=*/3});

    Simulation sim(cfg);
    sim.run();
    CHECK(sim.subnets()[0].dkg_excluded == std::set<ice_frost::Index>{2});
    CHECK(!sim.subnets()[0].id.key.empty());
    // the remaining quorum still signs and the network delivers
    REQUIRE(sim.metrics().honest_submissions == 1);
    CHECK(sim.metrics().delivery_rate == 1.0);
    // the exclusion is visible in the trace
    bool seen = false;
    for (const auto& line : sim.trace())
        if (line.find("\"type\":\"dkg\"") != std::string::npos &&
            line.find("\"excluded\":[2]") != std::string::npos)
            seen = true;
    CHECK(seen);
}

TEST_CASE("a bad signing response triggers the retry path and still delivers") {
    SimConfig cfg;
    cfg.n = 8;
    cfg.seed = 13;
    SubnetSpec sn;
    sn.t = 2;
    sn.members = {0, 1, 2};
    sn.submitter = 0;
    sn.initial_state = funded_state();
    sn.submissions.push_back({10.0, {}});
    cfg.subnets.push_back(sn);
    cfg.adversary.bad_responses.push_back({0, 0, /*signer=*/3});

    Simulation sim(cfg);
    sim.run();
    bool retry_seen = false;
    for (const auto& line : sim.trace())
        if (line.find("\"type\":\"signing-retry\"") != std::string::npos &&
            line.find("\"excluded\":[3]") != std::string::npos &&
            line.find("\"rounds\":2") != std::string::npos)
            retry_seen = true;
    CHECK(retry_seen);
    CHECK(sim.metrics().delivery_rate == 1.0);
    CHECK(sim.metrics().consistency_violations == 0);
}

TEST_CASE("a well-signed but malformed certificate never gets delivered") {
    auto base = one_subnet_config(12, 31, 0);
    base.adversary.bogus_certs.push_back({0, 10.0, BogusCert::Kind::bad_state_hash});

    SECTION("validation at the wcprb layer: parked in pending forever") {
        Simulation sim(base);
        sim.run();
        CHECK(sim.deliveries().empty());
        CHECK(sim.metrics().pending_high_water >= 1);
    }
    SECTION("validate-at-prb: dropped at the gossip gate, nothing parked") {
        auto cfg = base;
        cfg.validate_at_prb = true;
        Simulation sim(cfg);
        sim.run();
        CHECK(sim.deliveries().empty());
        CHECK(sim.metrics().pending_high_water == 0);
    }
}

TEST_CASE("validate-at-prb does not change honest delivery outcomes") {
    auto cfg = one_subnet_config(10, 55, 2);
    Simulation off(cfg);
    off.run();
    cfg.validate_at_prb = true;
    Simulation on(cfg);
    on.run();
    auto key = [](const DeliverRecord& r) { return std::pair{r.process, r.cert_digest}; };
    std::set<std::pair<prb::ProcessId, Digest32>> a, b;
    for (const auto& r : off.deliveries()) a.insert(key(r));
    for (const auto& r : on.deliveries()) b.insert(key(r));
    CHECK(a == b);
}

TEST_CASE("cross-subnet transfer: dep tracking, justified mint, conservation") {
    SimConfig cfg;
    cfg.n = 12;
    cfg.seed = 42;
    SubnetSpec a;  // subnet 0 receives
    a.t = 2;
    a.members = {0, 1, 2};
    a.submitter = 0;
    a.initial_state = funded_state(50);
    a.submissions.push_back({40.0, {}});  // picks up the inbound transfer
    SubnetSpec b;  // subnet 1 sends 7 tok to subnet 0
    b.t = 2;
    b.members = {3, 4, 5};
    b.submitter = 3;
    b.initial_state = funded_state(100);
    b.submissions.push_back(
        {10.0,
         {cert::Transaction::outbound(
             "alice", cert::CrossSubnetMessage::transfer(subnet_ref(0), "tok", "dora", 7))}});
    cfg.subnets.push_back(a);
    cfg.subnets.push_back(b);

    Simulation sim(cfg);
    sim.run();

    REQUIRE(sim.metrics().honest_submissions == 2);
    CHECK(sim.metrics().delivery_rate == 1.0);
    CHECK(sim.metrics().weak_causal_violations == 0);

    // subnet 0's certificate declares subnet 1's certificate as a dep
    const auto& key_a = sim.subnets()[0].id.key;
    bool dep_seen = false;
    for (const auto& r : sim.deliveries())
        if (r.subnet_key == key_a && !r.deps.empty()) dep_seen = true;
    CHECK(dep_seen);

    // the mint landed: burn on sender, mint on receiver, supply conserved
    const auto& sa = sim.subnets()[0].state;
    const auto& sb = sim.subnets()[1].state;
    CHECK(sb.balance("alice", "tok") == 93);
    CHECK(sa.balance("dora", "tok") == 7);
    uint64_t total = 0;
    for (const auto& [k, v] : sa.balances) total += v;
    for (const auto& [k, v] : sb.balances) total += v;
    CHECK(total == 150);
}
