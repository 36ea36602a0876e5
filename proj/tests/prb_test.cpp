#include <catch2/catch_amalgamated.hpp>

#include <deque>
#include <map>

#include "topos/prb.hpp"

using namespace topos;
using namespace topos::prb;

namespace {

InstanceId make_instance(const std::string& origin, const std::string& slot) {
    return {blake2b(Bytes(origin.begin(), origin.end())),
            blake2b(Bytes(slot.begin(), slot.end()))};
}

std::shared_ptr<const Bytes> payload_of(const std::string& s) {
    return std::make_shared<const Bytes>(s.begin(), s.end());
}

// Synchronous FIFO network: every process is honest and every message is
// delivered in send order. Exercises the reactor logic without the
// discrete-event machinery.
struct FifoNetwork {
    std::vector<std::unique_ptr<PrbProcess>> procs;
    std::deque<Outgoing> queue;
    std::map<ProcessId, std::vector<Delivery>> delivered;

    FifoNetwork(size_t n, SampleConfig cfg, uint64_t seed,
                PrbProcess::PayloadGate gate = nullptr) {
        if (!gate) gate = [](const InstanceId&, const Bytes&) { return true; };
        std::vector<ProcessId> registry(n);
        for (size_t i = 0; i < n; ++i) registry[i] = static_cast<ProcessId>(i);
        CounterRng root(seed);
        for (size_t i = 0; i < n; ++i) {
            procs.push_back(std::make_unique<PrbProcess>(
                static_cast<ProcessId>(i), registry, cfg,
                root.fork("proc", static_cast<uint64_t>(i)), gate));
        }
        for (auto& p : procs) enqueue(p->init_samples());
        drain();
    }

    void enqueue(const std::vector<Outgoing>& out) {
        for (const auto& o : out) queue.push_back(o);
    }

    void absorb(ProcessId id, HandleResult r) {
        enqueue(r.out);
        for (auto& d : r.delivered) delivered[id].push_back(std::move(d));
    }

    void drain() {
        while (!queue.empty()) {
            Outgoing o = queue.front();
            queue.pop_front();
            absorb(o.dest, procs[o.dest]->handle(o.msg));
        }
    }
};

}  // namespace

TEST_CASE("sample sizing matches the ceil(K ln n) rule") {
    for (size_t n : {8ul, 16ul, 128ul, 200ul, 512ul, 2048ul}) {
        auto cfg = SampleConfig::from_n(n);
        double ln_n = std::log(static_cast<double>(n));
        auto s = static_cast<uint32_t>(std::ceil(4.0 * ln_n));
        s = std::min<uint32_t>(s, static_cast<uint32_t>(n));  // sample fits the registry
        INFO("n=" << n);
        CHECK(cfg.echo_size == s);
        CHECK(cfg.ready_size == s);
        CHECK(cfg.delivery_size == s);
        CHECK(cfg.echo_threshold == static_cast<uint32_t>(std::ceil(2.0 * s / 3.0)));
        CHECK(cfg.ready_threshold == static_cast<uint32_t>(std::ceil(s / 3.0)));
        CHECK(cfg.delivery_threshold == static_cast<uint32_t>(std::ceil(2.0 * s / 3.0)));
        CHECK(cfg.gossip_fanout == static_cast<uint32_t>(std::ceil(ln_n)) + 1);
        CHECK(cfg.valid());
    }
    // K scales the samples, not the fanout
    CHECK(SampleConfig::from_n(128, 2.0).echo_size ==
          static_cast<uint32_t>(std::ceil(2.0 * std::log(128.0))));
}

TEST_CASE("sample initialization draws from the registry and subscribes") {
    size_t n = 64;
    auto cfg = SampleConfig::from_n(n);
    std::vector<ProcessId> registry(n);
    for (size_t i = 0; i < n; ++i) registry[i] = static_cast<ProcessId>(i);
    auto gate = [](const InstanceId&, const Bytes&) { return true; };

    PrbProcess p(7, registry, cfg, CounterRng(42).fork("proc", 7), gate);
    auto subs = p.init_samples();

    const auto& s = p.samples();
    CHECK(s.echo_sample.size() == cfg.echo_size);
    CHECK(s.ready_sample.size() == cfg.ready_size);
    CHECK(s.delivery_sample.size() == cfg.delivery_size);
    for (ProcessId q : s.echo_sample) CHECK(q < n);

    // one subscription per sampled peer per sample
    CHECK(subs.size() == cfg.echo_size + cfg.ready_size + cfg.delivery_size);
    std::map<SubscriptionKind, std::set<ProcessId>> by_kind;
    for (const auto& o : subs) {
        REQUIRE(o.msg.type == Message::Type::subscribe);
        CHECK(o.msg.sender == 7);
        by_kind[o.msg.sub_kind].insert(o.dest);
    }
    CHECK(by_kind[SubscriptionKind::echo] == s.echo_sample);
    CHECK(by_kind[SubscriptionKind::ready] == s.ready_sample);
    CHECK(by_kind[SubscriptionKind::delivery] == s.delivery_sample);

    // deterministic re-draw under the same rng stream
    PrbProcess p2(7, registry, cfg, CounterRng(42).fork("proc", 7), gate);
    p2.init_samples();
    CHECK(p2.samples().echo_sample == s.echo_sample);
    CHECK(p2.samples().delivery_sample == s.delivery_sample);

    // a different process id forks a different stream
    PrbProcess p3(8, registry, cfg, CounterRng(42).fork("proc", 8), gate);
    p3.init_samples();
    CHECK(p3.samples().echo_sample != s.echo_sample);
}

TEST_CASE("subscription kinds map to subscriber sets") {
    std::vector<ProcessId> registry{0, 1, 2, 3, 4, 5, 6, 7};
    SampleConfig cfg;
    cfg.echo_size = cfg.ready_size = cfg.delivery_size = 3;
    cfg.echo_threshold = 2;
    cfg.ready_threshold = 1;
    cfg.delivery_threshold = 2;
    cfg.gossip_fanout = 2;
    PrbProcess p(0, registry, cfg, CounterRng(1),
                 [](const InstanceId&, const Bytes&) { return true; });

    auto sub = [&](ProcessId from, SubscriptionKind k) {
        Message m;
        m.type = Message::Type::subscribe;
        m.sender = from;
        m.sub_kind = k;
        p.handle(m);
    };
    sub(1, SubscriptionKind::echo);
    sub(2, SubscriptionKind::ready);
    sub(3, SubscriptionKind::delivery);

    CHECK(p.samples().echo_subscribers == std::set<ProcessId>{1});
    // delivery subscribers receive Ready as well
    CHECK(p.samples().ready_subscribers == std::set<ProcessId>{2, 3});
}

TEST_CASE("broadcast reaches every process in a synchronous honest network") {
    size_t n = 48;
    FifoNetwork net(n, SampleConfig::from_n(n), 2024);
    auto inst = make_instance("subnet-a", "slot-0");
    auto payload = payload_of("certificate bytes");
    Digest32 digest = blake2b(*payload);

    net.absorb(0, net.procs[0]->broadcast(inst, payload));
    net.drain();

    for (size_t i = 0; i < n; ++i) {
        INFO("process " << i);
        REQUIRE(net.delivered[static_cast<ProcessId>(i)].size() == 1);
        const auto& d = net.delivered[static_cast<ProcessId>(i)][0];
        CHECK(d.instance == inst);
        CHECK(d.digest == digest);
        CHECK(*d.payload == *payload);
    }
}

TEST_CASE("payloads rejected by the gate are neither echoed nor delivered") {
    size_t n = 48;
    Bytes good = {1, 2, 3};
    auto gate = [&](const InstanceId&, const Bytes& b) { return b == good; };
    FifoNetwork net(n, SampleConfig::from_n(n), 7, gate);
    auto inst = make_instance("subnet-a", "slot-0");

    auto bogus = std::make_shared<const Bytes>(Bytes{9, 9, 9});
    net.absorb(0, net.procs[0]->broadcast(inst, bogus));
    net.drain();
    for (auto& [id, ds] : net.delivered) CHECK(ds.empty());

    // the same instance still accepts the good payload afterwards
    net.absorb(1, net.procs[1]->broadcast(inst, std::make_shared<const Bytes>(good)));
    net.drain();
    for (size_t i = 0; i < n; ++i) REQUIRE(net.delivered[static_cast<ProcessId>(i)].size() == 1);
}

TEST_CASE("at most one delivery per instance even under equivocation") {
    size_t n = 60;
    FifoNetwork net(n, SampleConfig::from_n(n), 99);
    auto inst = make_instance("subnet-a", "slot-0");
    auto pay_a = payload_of("version A");
    auto pay_b = payload_of("version B");

    // a Byzantine origin pushes conflicting payloads into the two halves
    for (size_t i = 0; i < n; ++i) {
        Message m;
        m.type = Message::Type::gossip;
        m.sender = 0;
        m.instance = inst;
        auto& pay = (i % 2 == 0) ? pay_a : pay_b;
        m.digest = blake2b(*pay);
        m.payload = pay;
        net.absorb(static_cast<ProcessId>(i), net.procs[i]->handle(m));
    }
    net.drain();

    std::set<Digest32> delivered_digests;
    for (auto& [id, ds] : net.delivered) {
        CHECK(ds.size() <= 1);  // no process delivers twice for one instance
        for (auto& d : ds) delivered_digests.insert(d.digest);
    }
    // every correct process saw both payloads via gossip but echoed only its
    // first; with all-honest echoes split evenly, neither version should
    // gather a two-thirds echo quorum, so nothing is delivered
    CHECK(delivered_digests.empty());
}

TEST_CASE("delivery requires strictly more than D matching Ready from the delivery sample") {
    std::vector<ProcessId> registry;
    for (ProcessId i = 0; i < 16; ++i) registry.push_back(i);
    SampleConfig cfg;
    cfg.echo_size = cfg.ready_size = cfg.delivery_size = 5;
    cfg.echo_threshold = 4;
    cfg.ready_threshold = 2;
    cfg.delivery_threshold = 3;  // deliver at 4 matching Ready
    cfg.gossip_fanout = 1;
    cfg.gossip_rounds = 0;  // keep the process quiet
    PrbProcess p(0, registry, cfg, CounterRng(5),
                 [](const InstanceId&, const Bytes&) { return true; });
    p.init_samples();

    auto inst = make_instance("s", "0");
    auto payload = payload_of("m");
    Digest32 digest = blake2b(*payload);

    // give it the payload first
    Message g;
    g.type = Message::Type::gossip;
    g.sender = 1;
    g.instance = inst;
    g.digest = digest;
    g.payload = payload;
    auto r0 = p.handle(g);
    CHECK(r0.delivered.empty());

    auto send_ready = [&](ProcessId from) {
        Message m;
        m.type = Message::Type::ready;
        m.sender = from;
        m.instance = inst;
        m.digest = digest;
        return p.handle(m);
    };

    std::vector<ProcessId> dsample(p.samples().delivery_sample.begin(),
                                   p.samples().delivery_sample.end());
    REQUIRE(dsample.size() == 5);

    // a Ready from outside every sample is ignored entirely
    ProcessId outsider = 0;
    for (ProcessId i = 0; i < 16; ++i) {
        if (!p.samples().ready_sample.contains(i) && !p.samples().delivery_sample.contains(i)) {
            outsider = i;
            break;
        }
    }
    CHECK(send_ready(outsider).delivered.empty());

    for (int i = 0; i < 3; ++i) CHECK(send_ready(dsample[i]).delivered.empty());
    // the 4th distinct delivery-sample Ready crosses the strict threshold
    auto r = send_ready(dsample[3]);
    REQUIRE(r.delivered.size() == 1);
    CHECK(r.delivered[0].digest == digest);
    // duplicates and further Ready never re-deliver
    CHECK(send_ready(dsample[4]).delivered.empty());
}

TEST_CASE("delivery waits for the payload when Ready arrives first") {
    std::vector<ProcessId> registry;
    for (ProcessId i = 0; i < 16; ++i) registry.push_back(i);
    SampleConfig cfg;
    cfg.echo_size = cfg.ready_size = cfg.delivery_size = 4;
    cfg.echo_threshold = 3;
    cfg.ready_threshold = 2;
    cfg.delivery_threshold = 2;  // deliver at 3 Ready
    cfg.gossip_fanout = 1;
    cfg.gossip_rounds = 0;
    PrbProcess p(0, registry, cfg, CounterRng(6),
                 [](const InstanceId&, const Bytes&) { return true; });
    p.init_samples();

    auto inst = make_instance("s", "1");
    auto payload = payload_of("late payload");
    Digest32 digest = blake2b(*payload);

    std::vector<ProcessId> dsample(p.samples().delivery_sample.begin(),
                                   p.samples().delivery_sample.end());
    for (int i = 0; i < 3; ++i) {
        Message m;
        m.type = Message::Type::ready;
        m.sender = dsample[i];
        m.instance = inst;
        m.digest = digest;
        CHECK(p.handle(m).delivered.empty());  // payload unknown: no delivery
    }

    Message g;
    g.type = Message::Type::gossip;
    g.sender = 1;
    g.instance = inst;
    g.digest = digest;
    g.payload = payload;
    auto r = p.handle(g);
    REQUIRE(r.delivered.size() == 1);
    CHECK(r.delivered[0].digest == digest);
}

TEST_CASE("Ready fires on the echo quorum or on the ready feedback threshold") {
    std::vector<ProcessId> registry;
    for (ProcessId i = 0; i < 16; ++i) registry.push_back(i);
    SampleConfig cfg;
    cfg.echo_size = cfg.ready_size = cfg.delivery_size = 4;
    cfg.echo_threshold = 3;
    cfg.ready_threshold = 2;
    cfg.delivery_threshold = 3;
    cfg.gossip_fanout = 1;
    cfg.gossip_rounds = 0;

    auto gate = [](const InstanceId&, const Bytes&) { return true; };
    auto inst = make_instance("s", "2");
    Digest32 digest = blake2b(Bytes{1});

    auto ready_out = [](const HandleResult& r) {
        size_t k = 0;
        for (const auto& o : r.out)
            if (o.msg.type == Message::Type::ready) ++k;
        return k;
    };

    SECTION("echo path") {
        PrbProcess p(0, registry, cfg, CounterRng(7), gate);
        p.init_samples();
        // a subscriber so the Ready is observable
        Message sub;
        sub.type = Message::Type::subscribe;
        sub.sender = 9;
        sub.sub_kind = SubscriptionKind::ready;
        p.handle(sub);

        std::vector<ProcessId> esample(p.samples().echo_sample.begin(),
                                       p.samples().echo_sample.end());
        Message e;
        e.type = Message::Type::echo;
        e.instance = inst;
        e.digest = digest;
        e.sender = esample[0];
        CHECK(ready_out(p.handle(e)) == 0);
        e.sender = esample[0];  // duplicate does not double count
        CHECK(ready_out(p.handle(e)) == 0);
        e.sender = esample[1];
        CHECK(ready_out(p.handle(e)) == 0);
        e.sender = esample[2];
        CHECK(ready_out(p.handle(e)) == 1);  // threshold 3 reached
        e.sender = esample[3];
        CHECK(ready_out(p.handle(e)) == 0);  // one Ready per instance
    }

    SECTION("ready feedback path") {
        PrbProcess p(0, registry, cfg, CounterRng(8), gate);
        p.init_samples();
        Message sub;
        sub.type = Message::Type::subscribe;
        sub.sender = 9;
        sub.sub_kind = SubscriptionKind::delivery;
        p.handle(sub);

        std::vector<ProcessId> rsample(p.samples().ready_sample.begin(),
                                       p.samples().ready_sample.end());
        Message m;
        m.type = Message::Type::ready;
        m.instance = inst;
        m.digest = digest;
        m.sender = rsample[0];
        CHECK(ready_out(p.handle(m)) == 0);
        m.sender = rsample[1];
        CHECK(ready_out(p.handle(m)) == 1);  // feedback threshold 2
    }
}
