#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "topos/bytes.hpp"
#include "topos/crypto.hpp"
#include "topos/rng.hpp"

// Sample-based probabilistic reliable broadcast: Echo/Ready/Delivery
// samples replace quorums; the unreliable pb layer is push gossip.
namespace topos::prb {

using ProcessId = uint32_t;

// One broadcast slot: (origin subnet, predecessor commitment). Conflicting
// certificates for the same slot share an instance, which is what makes
// equivocation per slot detectable.
struct InstanceId {
    Digest32 origin{};
    Digest32 slot{};
    bool operator==(const InstanceId&) const = default;
    auto operator<=>(const InstanceId&) const = default;
};

struct SampleConfig {
    uint32_t echo_size = 0;
    uint32_t ready_size = 0;
    uint32_t delivery_size = 0;
    uint32_t echo_threshold = 0;      // E
    uint32_t ready_threshold = 0;     // R
    uint32_t delivery_threshold = 0;  // D: delivery at strictly more than D
    uint32_t gossip_fanout = 0;
    uint32_t gossip_rounds = 2;

    // size = ceil(K ln n); E = ceil(2s/3), R = ceil(s/3), D = ceil(2s/3),
    // fanout = ceil(ln n) + 1.
    static SampleConfig from_n(size_t n, double K = 4.0) {
        SampleConfig c;
        double ln_n = std::log(static_cast<double>(std::max<size_t>(n, 2)));
        uint32_t s = static_cast<uint32_t>(std::ceil(K * ln_n));
        s = std::max<uint32_t>(1, std::min<uint32_t>(s, static_cast<uint32_t>(n)));
        c.echo_size = c.ready_size = c.delivery_size = s;
        c.echo_threshold = (2 * s + 2) / 3;
        c.ready_threshold = (s + 2) / 3;
        c.delivery_threshold = (2 * s + 2) / 3;
        c.gossip_fanout = static_cast<uint32_t>(std::ceil(ln_n)) + 1;
        return c;
    }

    bool valid() const {
        return echo_size && ready_size && delivery_size &&
               echo_threshold < echo_size + 1 && ready_threshold < ready_size + 1 &&
               delivery_threshold < delivery_size;  // D < |D| strictly
    }
};

enum class SubscriptionKind : uint8_t { echo = 0, ready = 1, delivery = 2 };

struct ProcessSamples {
    std::set<ProcessId> echo_sample;      // E: listen for Echo from these
    std::set<ProcessId> ready_sample;     // R: listen for Ready from these
    std::set<ProcessId> delivery_sample;  // D: count Ready toward delivery
    std::set<ProcessId> echo_subscribers;   // E~: send Echo to these
    std::set<ProcessId> ready_subscribers;  // R~: send Ready to these
};

struct Message {
    enum class Type : uint8_t { subscribe = 0, gossip = 1, echo = 2, ready = 3 };
    Type type = Type::gossip;
    ProcessId sender = 0;
    SubscriptionKind sub_kind = SubscriptionKind::echo;
    InstanceId instance;
    Digest32 digest{};
    std::shared_ptr<const Bytes> payload;  // gossip only
};

struct Outgoing {
    ProcessId dest = 0;
    Message msg;
};

struct BroadcastInstance {
    std::map<Digest32, std::shared_ptr<const Bytes>> candidates;
    std::map<Digest32, std::set<ProcessId>> echo_counts;
    std::map<Digest32, std::set<ProcessId>> ready_counts;
    std::map<Digest32, std::set<ProcessId>> delivery_counts;
    std::optional<Digest32> echo_sent;
    std::optional<Digest32> ready_sent;
    std::optional<Digest32> delivered;
    std::set<Digest32> gate_failed;  // payloads that failed the signature gate
};

struct Delivery {
    InstanceId instance;
    Digest32 digest{};
    std::shared_ptr<const Bytes> payload;
};

struct HandleResult {
    std::vector<Outgoing> out;
    std::vector<Delivery> delivered;
};

// One process's PRB reactor. Deterministic given its rng stream and the
// order of incoming messages; all side effects surface in HandleResult.
class PrbProcess {
public:
    // The gate verifies a gossiped payload (signature, and optionally
    // certificate well-formedness when validation runs at the PRB layer).
    using PayloadGate = std::function<bool(const InstanceId&, const Bytes&)>;

    PrbProcess(ProcessId self, std::vector<ProcessId> registry, SampleConfig config,
               CounterRng rng, PayloadGate gate)
        : self_(self),
          registry_(std::move(registry)),
          config_(config),
          rng_(std::move(rng)),
          gate_(std::move(gate)) {
        if (!config_.valid()) throw std::invalid_argument("invalid sample config");
        size_t need = std::max({config_.echo_size, config_.ready_size, config_.delivery_size});
        if (registry_.size() < need)
            throw std::invalid_argument("registry smaller than sample size");
    }

    ProcessId id() const { return self_; }
    const ProcessSamples& samples() const { return samples_; }
    const SampleConfig& config() const { return config_; }
    uint64_t messages_sent() const { return messages_sent_; }

    // read-only introspection (tests, trace tooling)
    const BroadcastInstance* instance(const InstanceId& id) const {
        auto it = instances_.find(id);
        return it == instances_.end() ? nullptr : &it->second;
    }

    // Uniform samples without replacement, then sample-specific
    // subscriptions to every sampled peer.
    std::vector<Outgoing> init_samples() {
        samples_.echo_sample = draw(config_.echo_size);
        samples_.ready_sample = draw(config_.ready_size);
        samples_.delivery_sample = draw(config_.delivery_size);
        std::vector<Outgoing> out;
        auto subscribe = [&](const std::set<ProcessId>& peers, SubscriptionKind kind) {
            for (ProcessId p : peers) {
                Message m;
                m.type = Message::Type::subscribe;
                m.sender = self_;
                m.sub_kind = kind;
                out.push_back({p, m});
            }
        };
        subscribe(samples_.echo_sample, SubscriptionKind::echo);
        subscribe(samples_.ready_sample, SubscriptionKind::ready);
        subscribe(samples_.delivery_sample, SubscriptionKind::delivery);
        messages_sent_ += out.size();
        return out;
    }

    // prb.Broadcast: push the payload into the gossip layer.
    HandleResult broadcast(const InstanceId& instance, std::shared_ptr<const Bytes> payload) {
        Message m;
        m.type = Message::Type::gossip;
        m.sender = self_;
        m.instance = instance;
        m.digest = blake2b(*payload);
        m.payload = std::move(payload);
        return handle(m);
    }

    HandleResult handle(const Message& m) {
        HandleResult r;
        switch (m.type) {
            case Message::Type::subscribe:
                on_subscribe(m);
                break;
            case Message::Type::gossip:
                on_gossip(m, r);
                break;
            case Message::Type::echo:
                on_echo(m, r);
                break;
            case Message::Type::ready:
                on_ready(m, r);
                break;
        }
        messages_sent_ += r.out.size();
        return r;
    }

private:
    void on_subscribe(const Message& m) {
        switch (m.sub_kind) {
            case SubscriptionKind::echo:
                samples_.echo_subscribers.insert(m.sender);
                break;
            case SubscriptionKind::ready:
            case SubscriptionKind::delivery:
                // Delivery-sample members need our Ready messages too.
                samples_.ready_subscribers.insert(m.sender);
                break;
        }
    }

    // First acceptance of a payload, whatever message type carried it:
    // gate it, then run the pb-delivery side effects exactly once — the
    // infect-and-die forwarding and the single Echo. Echo/Ready carry the
    // message itself so a Ready quorum can never outrun the payload.
    void accept_payload(const Message& m, BroadcastInstance& inst, HandleResult& r) {
        if (!m.payload || inst.candidates.contains(m.digest)) return;
        if (inst.gate_failed.contains(m.digest)) return;
        if (blake2b(*m.payload) != m.digest) return;
        if (!gate_(m.instance, *m.payload)) {
            inst.gate_failed.insert(m.digest);
            return;  // bad signature (or ill-formed cert): drop silently
        }
        inst.candidates[m.digest] = m.payload;
        // infect-and-die push gossip: each process forwards a payload once,
        // to fanout peers per round
        for (uint32_t round = 0; round < config_.gossip_rounds; ++round) {
            for (ProcessId p : draw(config_.gossip_fanout)) {
                Message fwd;
                fwd.type = Message::Type::gossip;
                fwd.sender = self_;
                fwd.instance = m.instance;
                fwd.digest = m.digest;
                fwd.payload = m.payload;
                r.out.push_back({p, fwd});
            }
        }
        // first correctly signed payload per instance triggers one Echo
        if (!inst.echo_sent) {
            inst.echo_sent = m.digest;
            Message echo;
            echo.type = Message::Type::echo;
            echo.sender = self_;
            echo.instance = m.instance;
            echo.digest = m.digest;
            echo.payload = m.payload;
            for (ProcessId p : samples_.echo_subscribers) r.out.push_back({p, echo});
        }
        check_delivery(m.instance, r);
    }

    void on_gossip(const Message& m, HandleResult& r) {
        auto& inst = instances_[m.instance];
        accept_payload(m, inst, r);
    }

    void on_echo(const Message& m, HandleResult& r) {
        if (!samples_.echo_sample.contains(m.sender)) return;  // listen rule
        auto& inst = instances_[m.instance];
        accept_payload(m, inst, r);
        inst.echo_counts[m.digest].insert(m.sender);
        maybe_send_ready(m.instance, inst, m.digest, r);
    }

    void on_ready(const Message& m, HandleResult& r) {
        bool in_ready = samples_.ready_sample.contains(m.sender);
        bool in_delivery = samples_.delivery_sample.contains(m.sender);
        if (!in_ready && !in_delivery) return;  // listen rule
        auto& inst = instances_[m.instance];
        accept_payload(m, inst, r);
        if (in_ready) {
            inst.ready_counts[m.digest].insert(m.sender);
            maybe_send_ready(m.instance, inst, m.digest, r);
        }
        if (in_delivery) {
            inst.delivery_counts[m.digest].insert(m.sender);
            check_delivery(m.instance, r);
        }
    }

    void maybe_send_ready(const InstanceId& id, BroadcastInstance& inst, const Digest32& digest,
                          HandleResult& r) {
        if (inst.ready_sent) return;  // at most one Ready per instance
        bool echo_ok = inst.echo_counts[digest].size() >= config_.echo_threshold;
        bool ready_ok = inst.ready_counts[digest].size() >= config_.ready_threshold;
        if (!echo_ok && !ready_ok) return;
        inst.ready_sent = digest;
        Message ready;
        ready.type = Message::Type::ready;
        ready.sender = self_;
        ready.instance = id;
        ready.digest = digest;
        if (auto it = inst.candidates.find(digest); it != inst.candidates.end())
            ready.payload = it->second;
        for (ProcessId p : samples_.ready_subscribers) r.out.push_back({p, ready});
        check_delivery(id, r);
    }

    void check_delivery(const InstanceId& id, HandleResult& r) {
        auto& inst = instances_[id];
        if (inst.delivered) return;  // deliver at most once per instance
        for (const auto& [digest, senders] : inst.delivery_counts) {
            if (senders.size() <= config_.delivery_threshold) continue;
            auto payload = inst.candidates.find(digest);
            if (payload == inst.candidates.end()) continue;  // payload not yet seen
            inst.delivered = digest;
            r.delivered.push_back({id, digest, payload->second});
            return;
        }
    }

    std::set<ProcessId> draw(uint32_t count) {
        // without replacement
        count = std::min<uint32_t>(count, static_cast<uint32_t>(registry_.size()));
        std::set<ProcessId> out;
        while (out.size() < count) out.insert(registry_[rng_.below(registry_.size())]);
        return out;
    }

    ProcessId self_;
    std::vector<ProcessId> registry_;
    SampleConfig config_;
    CounterRng rng_;
    PayloadGate gate_;
    ProcessSamples samples_;
    std::map<InstanceId, BroadcastInstance> instances_;
    uint64_t messages_sent_ = 0;
};

}  // namespace topos::prb
