#pragma once

#include <json.hpp>

#include <queue>
#include <string>
#include <variant>

#include "topos/certificate.hpp"
#include "topos/ice_frost.hpp"
#include "topos/prb.hpp"
#include "topos/wcprb.hpp"

// Deterministic discrete-event network simulator hosting TCE processes and
// subnet actors, with a registration gate and scripted Byzantine adversaries.
namespace topos::simnet {

using Group = Ristretto255Group;
using prb::ProcessId;
using json = nlohmann::json;

// ---------------------------------------------------------------- config

struct Submission {
    double time = 0;
    std::vector<cert::Transaction> txs;  // scripted batch; justified mints added
};

struct SubnetSpec {
    uint32_t t = 2;                    // signing threshold
    std::vector<ProcessId> members;    // signer/member processes, in order
    ProcessId submitter = 0;           // designated submitter (must be a member)
    cert::SubnetState initial_state;
    std::vector<Submission> submissions;
};

// Scripted Byzantine behaviors. All reference entities by index so a script
// replays exactly from the seed.
struct Equivocate {
    size_t subnet = 0;      // which subnet turns Byzantine
    size_t submission = 0;  // which of its submissions is equivocated
    std::vector<cert::Transaction> alt_txs;  // the conflicting batch
};

struct BogusCert {
    size_t subnet = 0;
    double time = 0;
    enum class Kind : int { bad_state_hash = 0, bad_batch_root = 1, bad_inclusion = 2 };
    Kind kind = Kind::bad_state_hash;
};

struct BadShare {
    size_t subnet = 0;
    uint32_t dealer = 1;  // DKG participant index (1-based)
    uint32_t victim = 2;  // receiver of the corrupted share
};

struct BadResponse {
    size_t subnet = 0;
    size_t submission = 0;
    uint32_t signer = 1;  // signing participant index (1-based)
};

struct AdversaryScript {
    std::vector<Equivocate> equivocations;
    std::set<ProcessId> mute;        // processes whose outgoing messages vanish
    std::set<ProcessId> delayed;     // processes whose sends are stretched
    double delay_factor = 1.0;
    std::vector<BogusCert> bogus_certs;
    std::vector<BadShare> bad_shares;
    std::vector<BadResponse> bad_responses;
};

// Scripted workloads cannot name a subnet's real id (the DKG group key)
// before the run; they use this placeholder, resolved at submission time.
inline cert::SubnetId subnet_ref(size_t index) {
    return {Bytes{0xF0, static_cast<uint8_t>(index)}};
}

struct SimConfig {
    size_t n = 6;
    double f = 0.0;  // the highest floor(f*n) process ids are Byzantine
    uint64_t seed = 1;
    double horizon = 100000.0;
    double K = 4.0;
    std::optional<prb::SampleConfig> sample_override;
    bool validate_at_prb = false;
    std::vector<SubnetSpec> subnets;
    AdversaryScript adversary;
};

// --------------------------------------------------------------- metrics

struct MetricsSummary {
    double delivery_rate = 0.0;  // fraction of (honest cert, correct proc) delivered
    uint64_t consistency_violations = 0;
    uint64_t weak_causal_violations = 0;
    double mean_messages_per_process = 0.0;
    uint64_t max_messages_per_process = 0;
    std::vector<double> delivery_latencies;  // event-time, submit -> wcprb-deliver
    size_t pending_high_water = 0;
    uint64_t gate_drops = 0;  // unregistered-sender drops
    uint64_t honest_submissions = 0;

    double mean_latency() const {
        if (delivery_latencies.empty()) return 0.0;
        double s = 0;
        for (double l : delivery_latencies) s += l;
        return s / static_cast<double>(delivery_latencies.size());
    }
};

// A structured wcprb-delivery record; the JSON trace mirrors these.
struct DeliverRecord {
    ProcessId process = 0;
    double time = 0;
    Digest32 cert_digest{};
    Bytes subnet_key;
    Digest32 prev{};
    Digest32 next{};
    std::vector<Digest32> deps;
    size_t pending_size = 0;
};

// ------------------------------------------------------- trace auditing

// Consistency: no two correct processes deliver conflicting certificates
// (same subnet + predecessor, different digest). Counts conflicting pairs
// of (subnet, predecessor) slots.
inline uint64_t audit_consistency(const std::vector<DeliverRecord>& recs,
                                  const std::set<ProcessId>& correct) {
    std::map<std::pair<Bytes, Digest32>, std::set<Digest32>> by_slot;
    for (const auto& r : recs) {
        if (!correct.contains(r.process)) continue;
        by_slot[{r.subnet_key, r.prev}].insert(r.cert_digest);
    }
    uint64_t v = 0;
    for (const auto& [slot, digests] : by_slot)
        if (digests.size() > 1) ++v;
    return v;
}

// Weak causal order: per correct process, every subnet's certificates are
// delivered in chain order, and every declared dep is already in the
// deliverer's history (certificate or filed dep) at delivery time.
inline uint64_t audit_weak_causal_order(std::vector<DeliverRecord> recs,
                                        const std::map<Bytes, Digest32>& genesis,
                                        const std::set<ProcessId>& correct) {
    std::stable_sort(recs.begin(), recs.end(),
                     [](const DeliverRecord& a, const DeliverRecord& b) {
                         if (a.time != b.time) return a.time < b.time;
                         return a.process < b.process;
                     });
    struct View {
        std::set<Digest32> history;          // certs + filed deps
        std::map<Bytes, Digest32> tips;      // per-subnet chain tip
    };
    std::map<ProcessId, View> views;
    uint64_t v = 0;
    for (const auto& r : recs) {
        if (!correct.contains(r.process)) continue;
        auto& view = views[r.process];
        for (const auto& d : r.deps)
            if (!view.history.contains(d)) ++v;  // unsatisfied dependency
        auto tip = view.tips.find(r.subnet_key);
        Digest32 expect = tip != view.tips.end()
                              ? tip->second
                              : (genesis.contains(r.subnet_key) ? genesis.at(r.subnet_key)
                                                                : Digest32{});
        if (r.prev != expect) ++v;  // out of chain order
        view.tips[r.subnet_key] = r.next;
        view.history.insert(r.cert_digest);
        for (const auto& d : r.deps) view.history.insert(d);
    }
    return v;
}

// ------------------------------------------------------------ simulator

class Simulation {
public:
    struct Node {
        std::unique_ptr<prb::PrbProcess> prb;
        std::unique_ptr<wcprb::ProcessLedger> ledger;
        bool byzantine = false;
    };

    struct SubnetRuntime {
        cert::SubnetId id;
        cert::SubnetState state;  // the actor's authoritative chain state
        std::map<ice_frost::Index, ice_frost::KeyMaterial<Group>> holders;
        std::set<ice_frost::Index> dkg_excluded;
        bool byzantine = false;
    };

    explicit Simulation(SimConfig cfg) : cfg_(std::move(cfg)), root_(cfg_.seed) {
        ensure_sodium();
        sample_cfg_ = cfg_.sample_override
                          ? *cfg_.sample_override
                          : prb::SampleConfig::from_n(cfg_.n, cfg_.K);
        size_t nbyz = static_cast<size_t>(cfg_.f * static_cast<double>(cfg_.n));
        for (size_t i = 0; i < cfg_.n; ++i) {
            registry_.push_back(static_cast<ProcessId>(i));
            registered_.insert(static_cast<ProcessId>(i));
            if (i >= cfg_.n - nbyz) byzantine_.insert(static_cast<ProcessId>(i));
        }
    }

    // Executes registration, DKG per subnet, the scripted workload, and
    // drains events to quiescence (or the horizon). Repeat runs with the
    // same config produce byte-identical traces.
    void run() {
        emit_config_record();
        run_dkg_phase();
        spawn_nodes();
        schedule_workload();
        event_loop();
        finalize_metrics();
    }

    const std::vector<std::string>& trace() const { return trace_; }
    const MetricsSummary& metrics() const { return metrics_; }
    const std::vector<DeliverRecord>& deliveries() const { return deliver_records_; }
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<SubnetRuntime>& subnets() const { return subnets_; }
    const std::map<Bytes, Digest32>& genesis_digests() const { return genesis_digests_; }

    std::set<ProcessId> correct_processes() const {
        std::set<ProcessId> out;
        for (ProcessId p : registry_)
            if (!byzantine_.contains(p) && !cfg_.adversary.mute.contains(p)) out.insert(p);
        return out;
    }

    // Test hook: inject a raw message from an arbitrary (possibly
    // unregistered) sender; the receiver-side gate decides its fate.
    void inject(double time, ProcessId dest, prb::Message msg) {
        push_event(time, dest, std::move(msg));
    }

    Digest32 trace_hash() const {
        Bytes all;
        for (const auto& line : trace_) {
            all.insert(all.end(), line.begin(), line.end());
            all.push_back('\n');
        }
        return blake2b(all);
    }

private:
    // ------------------------------------------------------------ events
    struct SubmitEvent {
        size_t subnet;
        size_t submission;
    };
    struct BogusEvent {
        size_t script_index;
    };
    using Payload = std::variant<prb::Message, SubmitEvent, BogusEvent>;
    struct Event {
        double time;
        uint64_t seq;
        ProcessId dest;
        Payload payload;
        bool operator>(const Event& o) const {
            if (time != o.time) return time > o.time;
            return seq > o.seq;
        }
    };

    void push_event(double time, ProcessId dest, Payload p) {
        queue_.push({time, seq_++, dest, std::move(p)});
    }

    // Log-normal latency, median 1.0, sigma 0.5, via explicit Box-Muller so
    // the draw is identical across standard libraries.
    double draw_latency() {
        double u1 = 0;
        while (u1 <= 0.0) {
            u1 = static_cast<double>(net_rng_->below(1ull << 53)) /
                 static_cast<double>(1ull << 53);
        }
        double u2 = static_cast<double>(net_rng_->below(1ull << 53)) /
                    static_cast<double>(1ull << 53);
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        return std::exp(0.5 * z);
    }

    void send(double now, ProcessId from, ProcessId dest, prb::Message msg) {
        if (cfg_.adversary.mute.contains(from)) return;
        double lat = draw_latency();
        if (cfg_.adversary.delayed.contains(from)) lat *= cfg_.adversary.delay_factor;
        push_event(now + lat, dest, std::move(msg));
    }

    void send_all(double now, ProcessId from, const std::vector<prb::Outgoing>& out) {
        for (const auto& o : out) send(now, from, o.dest, o.msg);
    }

    // --------------------------------------------------------- DKG phase
    void run_dkg_phase() {
        for (size_t i = 0; i < cfg_.subnets.size(); ++i) {
            const auto& spec = cfg_.subnets[i];
            std::string tag = "subnet-" + std::to_string(i);
            ice_frost::Context ctx{"tce-sim", 0, Bytes(tag.begin(), tag.end())};
            ice_frost::KeygenMisbehavior mis;
            for (const auto& bs : cfg_.adversary.bad_shares)
                if (bs.subnet == i) mis.bad_share[bs.dealer] = bs.victim;
            auto rng = root_.fork("dkg", i);
            auto result = ice_frost::run_keygen<Group>(
                spec.t, static_cast<uint32_t>(spec.members.size()), ctx, rng, mis);
            SubnetRuntime rt;
            if (!result.keys.empty()) {
                rt.holders = std::move(result.keys);
                rt.id.key = Group::element_encode(rt.holders.begin()->second.group_key);
            }
            rt.dkg_excluded = result.excluded;
            rt.state = spec.initial_state;
            subnets_.push_back(std::move(rt));

            auto& rtr = subnets_.back();
            json rec;
            rec["type"] = "dkg";
            rec["subnet"] = i;
            rec["key"] = to_hex(rtr.id.key);
            rec["excluded"] = std::vector<uint32_t>(rtr.dkg_excluded.begin(),
                                                    rtr.dkg_excluded.end());
            rec["genesis"] = to_hex(spec.initial_state.commitment().digest);
            std::map<std::string, uint64_t> totals;
            for (const auto& [key, amount] : spec.initial_state.balances)
                totals[key.second] += amount;
            rec["asset_totals"] = totals;
            emit(rec);

            if (!rtr.id.key.empty()) {
                // subnet registration: genesis commitment enters the registry
                genesis_[rtr.id.key] = spec.initial_state.commitment();
                genesis_digests_[rtr.id.key] = spec.initial_state.commitment().digest;
            }
        }
        for (const auto& eq : cfg_.adversary.equivocations)
            if (eq.subnet < subnets_.size()) subnets_[eq.subnet].byzantine = true;
    }

    // --------------------------------------------------------- processes
    void spawn_nodes() {
        for (size_t i = 0; i < cfg_.n; ++i) {
            auto pid = static_cast<ProcessId>(i);
            std::optional<cert::SubnetId> member_of;
            for (size_t s = 0; s < cfg_.subnets.size(); ++s) {
                const auto& m = cfg_.subnets[s].members;
                if (std::find(m.begin(), m.end(), pid) != m.end()) {
                    member_of = subnets_[s].id;
                    break;
                }
            }
            Node node;
            node.byzantine = byzantine_.contains(pid);
            node.prb = std::make_unique<prb::PrbProcess>(
                pid, registry_, sample_cfg_, root_.fork("proc", i),
                [this](const prb::InstanceId& inst, const Bytes& payload) {
                    return gate_payload(inst, payload);
                });
            node.ledger = std::make_unique<wcprb::ProcessLedger>(member_of, genesis_,
                                                                 cfg_.validate_at_prb);
            nodes_.push_back(std::move(node));
        }
        net_rng_ = root_.fork("net");
        for (auto& node : nodes_) {
            auto subs = node.prb->init_samples();
            send_all(0.0, node.prb->id(), subs);
        }
    }

    // The PRB gossip gate: decode, check the payload belongs to the claimed
    // instance, require a registered subnet and a valid threshold signature;
    // with validate-at-prb also require certificate well-formedness.
    bool gate_payload(const prb::InstanceId& inst, const Bytes& payload) {
        auto m = wcprb::CertificateMessage::decode(payload);
        if (!m) return false;
        const auto& c = m->certificate;
        if (instance_of(c) != inst) return false;
        if (!genesis_.contains(c.subnet_id.key)) return false;  // unregistered subnet
        Digest32 sig_key = tagged_hash("tce/sig-cache", c.encode());
        auto cached = sig_cache_.find(sig_key);
        bool sig_ok;
        if (cached != sig_cache_.end()) {
            sig_ok = cached->second;
        } else {
            sig_ok = cert::verify_cert_signature<Group>(c);
            sig_cache_[sig_key] = sig_ok;
        }
        if (!sig_ok) return false;
        if (cfg_.validate_at_prb) {
            auto vit = cert_cache_.find(sig_key);
            bool cert_ok;
            if (vit != cert_cache_.end()) {
                cert_ok = vit->second;
            } else {
                cert_ok = cert::valid_cert(c);
                cert_cache_[sig_key] = cert_ok;
            }
            if (!cert_ok) return false;
        }
        return true;
    }

    static prb::InstanceId instance_of(const cert::Certificate& c) {
        return {blake2b(c.subnet_id.key), c.prev_state_hash.digest};
    }

    // ---------------------------------------------------------- workload
    void schedule_workload() {
        for (size_t s = 0; s < cfg_.subnets.size(); ++s)
            for (size_t k = 0; k < cfg_.subnets[s].submissions.size(); ++k)
                push_event(cfg_.subnets[s].submissions[k].time,
                           cfg_.subnets[s].submitter, SubmitEvent{s, k});
        for (size_t b = 0; b < cfg_.adversary.bogus_certs.size(); ++b)
            push_event(cfg_.adversary.bogus_certs[b].time,
                       cfg_.subnets[cfg_.adversary.bogus_certs[b].subnet].submitter,
                       BogusEvent{b});
    }

    std::optional<cert::Certificate> sign_certificate(size_t s, size_t k,
                                                      const cert::SubnetState& pre,
                                                      const std::vector<cert::Transaction>& txs,
                                                      std::string* err = nullptr) {
        auto& rt = subnets_[s];
        std::set<ice_frost::Index> signer_set;
        for (const auto& [idx, km] : rt.holders) signer_set.insert(idx);

        // scripted bad signing responses: tamper with one signer's share of z
        std::optional<uint32_t> bad_signer;
        for (const auto& br : cfg_.adversary.bad_responses)
            if (br.subnet == s && br.submission == k) bad_signer = br.signer;

        auto rng = root_.fork("sign", s * 1000 + k);
        auto payload_cert = cert::build_and_sign_certificate<Group>(
            rt.holders, signer_set, pre, txs, rng, err);
        if (!bad_signer) return payload_cert;

        // rebuild with a tampering signer to exercise the retry path
        auto proven = cert::prove_transition(pre, txs, err);
        if (!proven || !payload_cert) return std::nullopt;
        cert::Certificate c = *payload_cert;
        auto rng2 = root_.fork("sign-retry", s * 1000 + k);
        ice_frost::SigningOutcome outcome;
        auto sig = ice_frost::threshold_sign<Group>(
            rt.holders, signer_set, c.signing_payload(), rng2,
            [&](ice_frost::Index idx, Group::Scalar& z) {
                if (idx == *bad_signer) z = Group::scalar_add(z, Group::scalar_one());
            },
            &outcome);
        if (!sig) return std::nullopt;
        c.signature = sig->encode();
        json rec;
        rec["type"] = "signing-retry";
        rec["subnet"] = s;
        rec["submission"] = k;
        rec["excluded"] = std::vector<uint32_t>(outcome.excluded.begin(), outcome.excluded.end());
        rec["rounds"] = outcome.rounds;
        emit(rec);
        return c;
    }

    std::vector<cert::Transaction> resolve_refs(std::vector<cert::Transaction> txs) const {
        for (auto& tx : txs) {
            auto& key = tx.message.target_subnet.key;
            if (key.size() == 2 && key[0] == 0xF0 && key[1] < subnets_.size())
                key = subnets_[key[1]].id.key;
        }
        return txs;
    }

    // Justified inbound mints: one per cross-subnet transfer addressed to
    // this subnet among the submitter's outstanding deps.
    std::vector<cert::Transaction> mints_from_deps(const SubnetRuntime& rt,
                                                   const std::vector<cert::Certificate>& deps) {
        std::vector<cert::Transaction> mints;
        for (const auto& dep : deps) {
            Digest32 cd = dep.digest();
            for (uint32_t i = 0; i < dep.xs_list.size(); ++i) {
                const auto& xs = dep.xs_list[i];
                if (xs.target_subnet.key != rt.id.key) continue;
                if (xs.kind != cert::CrossSubnetMessage::Kind::transfer_asset) continue;
                Writer w;
                w.raw(cd);
                w.u32(i);
                Digest32 source = tagged_hash("tce/mint-source", w.take());
                mints.push_back(cert::Transaction::mint(source, xs.recipient, xs.asset_id, xs.amount));
            }
        }
        return mints;
    }

    void do_submission(double now, size_t s, size_t k) {
        auto& rt = subnets_[s];
        if (rt.holders.empty()) return;  // DKG aborted
        const auto& spec = cfg_.subnets[s];
        auto& submitter = nodes_[spec.submitter];

        const Equivocate* eq = nullptr;
        for (const auto& e : cfg_.adversary.equivocations)
            if (e.subnet == s && e.submission == k) eq = &e;

        std::vector<cert::Transaction> txs = resolve_refs(spec.submissions[k].txs);
        auto mints = mints_from_deps(rt, submitter.ledger->deps_p());
        txs.insert(txs.end(), mints.begin(), mints.end());

        std::string err;
        auto c = sign_certificate(s, k, rt.state, txs, &err);
        if (!c) {
            emit_submit_record(now, s, k, Digest32{}, false, err, rt, nullptr);
            return;
        }

        if (eq) {
            do_equivocation(now, s, *c, *eq, txs);
            return;
        }

        auto m = submitter.ledger->make_submission(*c);
        auto verdict = submitter.ledger->submit(m);
        bool accepted = verdict == wcprb::SubmitError::accepted;
        if (accepted) {
            rt.state = *cert::apply_stf(rt.state, txs);
            auto payload = std::make_shared<const Bytes>(m.encode());
            track_honest_submission(now, m);
            auto r = submitter.prb->broadcast(instance_of(*c), payload);
            absorb(now, spec.submitter, r);
        }
        emit_submit_record(now, s, k, c->digest(), accepted,
                           accepted ? "" : "rejected at source", rt, &txs);
    }

    // Coordinated double-spend: the Byzantine subnet signs two conflicting
    // certificates for the same slot and the Byzantine processes split the
    // gossip across two halves of the network, echoing and readying both.
    void do_equivocation(double now, size_t s, const cert::Certificate& cert_a,
                         const Equivocate& eq, const std::vector<cert::Transaction>& txs_a) {
        auto& rt = subnets_[s];
        std::string err;
        auto cert_b = sign_certificate(s, eq.submission + 500, rt.state,
                                       resolve_refs(eq.alt_txs), &err);
        if (!cert_b) return;
        rt.state = *cert::apply_stf(rt.state, txs_a);  // the adversary commits to A

        auto inst = instance_of(cert_a);
        wcprb::CertificateMessage ma{cert_a, {}};
        wcprb::CertificateMessage mb{*cert_b, {}};
        auto pa = std::make_shared<const Bytes>(ma.encode());
        auto pb = std::make_shared<const Bytes>(mb.encode());
        Digest32 da = blake2b(*pa);
        Digest32 db = blake2b(*pb);

        json rec;
        rec["type"] = "equivocation";
        rec["subnet"] = s;
        rec["cert_a"] = to_hex(cert_a.digest());
        rec["cert_b"] = to_hex(cert_b->digest());
        emit(rec);

        std::vector<ProcessId> byz(byzantine_.begin(), byzantine_.end());
        ProcessId origin = byz.empty() ? cfg_.subnets[s].submitter : byz[0];

        // split gossip: version A to even ids, version B to odd ids
        for (ProcessId p : registry_) {
            prb::Message g;
            g.type = prb::Message::Type::gossip;
            g.sender = origin;
            g.instance = inst;
            if (p % 2 == 0) {
                g.digest = da;
                g.payload = pa;
            } else {
                g.digest = db;
                g.payload = pb;
            }
            send(now, origin, p, g);
        }
        // coordinated support stays consistent with the gossip split: each
        // recipient only ever sees Byzantine Echo/Ready for its own version
        for (ProcessId b : byz) {
            for (ProcessId p : registry_) {
                if (p == b) continue;
                prb::Message e;
                e.sender = b;
                e.instance = inst;
                e.digest = (p % 2 == 0) ? da : db;
                e.type = prb::Message::Type::echo;
                send(now, b, p, e);
                e.type = prb::Message::Type::ready;
                send(now, b, p, e);
            }
        }
    }

    void do_bogus(double now, size_t script_index) {
        const auto& script = cfg_.adversary.bogus_certs[script_index];
        auto& rt = subnets_[script.subnet];
        if (rt.holders.empty()) return;
        std::set<ice_frost::Index> signer_set;
        for (const auto& [idx, km] : rt.holders) signer_set.insert(idx);
        auto rng = root_.fork("bogus", script_index);
        auto c = cert::build_and_sign_certificate<Group>(rt.holders, signer_set, rt.state, {},
                                                         rng);
        if (!c) return;
        switch (script.kind) {
            case BogusCert::Kind::bad_state_hash:
                c->state_hash.digest[0] ^= 0xff;
                break;
            case BogusCert::Kind::bad_batch_root:
                c->proof.batch_root[0] ^= 0xff;
                break;
            case BogusCert::Kind::bad_inclusion:
                c->xs_list.push_back(cert::CrossSubnetMessage::transfer(
                    cert::SubnetId{Bytes{1, 2, 3}}, "tok", "mallory", 5));
                break;
        }
        // the adversary re-signs the malformed body so only the certificate
        // check (not the signature) can reject it
        auto rng2 = root_.fork("bogus-sign", script_index);
        auto sig = ice_frost::threshold_sign<Group>(rt.holders, signer_set,
                                                    c->signing_payload(), rng2);
        if (!sig) return;
        c->signature = sig->encode();

        wcprb::CertificateMessage m{*c, {}};
        auto payload = std::make_shared<const Bytes>(m.encode());
        ProcessId origin = cfg_.subnets[script.subnet].submitter;
        json rec;
        rec["type"] = "bogus-cert";
        rec["subnet"] = script.subnet;
        rec["kind"] = static_cast<int>(script.kind);
        rec["cert"] = to_hex(c->digest());
        emit(rec);
        for (ProcessId p : registry_) {
            prb::Message g;
            g.type = prb::Message::Type::gossip;
            g.sender = origin;
            g.instance = instance_of(*c);
            g.digest = blake2b(*payload);
            g.payload = payload;
            send(now, origin, p, g);
        }
    }

    void track_honest_submission(double now, const wcprb::CertificateMessage& m) {
        ++metrics_.honest_submissions;
        submit_times_[m.certificate.digest()] = now;
    }

    // -------------------------------------------------------- event loop
    void event_loop() {
        while (!queue_.empty()) {
            Event ev = queue_.top();
            queue_.pop();
            if (ev.time > cfg_.horizon) break;
            if (std::holds_alternative<SubmitEvent>(ev.payload)) {
                auto se = std::get<SubmitEvent>(ev.payload);
                do_submission(ev.time, se.subnet, se.submission);
            } else if (std::holds_alternative<BogusEvent>(ev.payload)) {
                do_bogus(ev.time, std::get<BogusEvent>(ev.payload).script_index);
            } else {
                deliver(ev.time, ev.dest, std::get<prb::Message>(ev.payload));
            }
        }
    }

    void deliver(double now, ProcessId dest, const prb::Message& msg) {
        if (!registered_.contains(msg.sender)) {
            ++metrics_.gate_drops;  // Sybil gate: unregistered sender
            return;
        }
        if (dest >= nodes_.size()) return;
        auto& node = nodes_[dest];
        absorb(now, dest, node.prb->handle(msg));
    }

    void absorb(double now, ProcessId self, const prb::HandleResult& r) {
        send_all(now, self, r.out);
        auto& node = nodes_[self];
        for (const auto& d : r.delivered) {
            auto m = wcprb::CertificateMessage::decode(*d.payload);
            if (!m) continue;
            auto delivered = node.ledger->on_prb_deliver(*m, static_cast<uint64_t>(now));
            for (const auto& dm : delivered) record_delivery(now, self, dm);
        }
    }

    void record_delivery(double now, ProcessId p, const wcprb::CertificateMessage& m) {
        DeliverRecord rec;
        rec.process = p;
        rec.time = now;
        rec.cert_digest = m.certificate.digest();
        rec.subnet_key = m.certificate.subnet_id.key;
        rec.prev = m.certificate.prev_state_hash.digest;
        rec.next = m.certificate.state_hash.digest;
        for (const auto& d : m.deps) rec.deps.push_back(d.digest());
        rec.pending_size = node_pending(p);
        deliver_records_.push_back(rec);

        auto st = submit_times_.find(m.certificate.digest());
        if (st != submit_times_.end() && !byzantine_.contains(p))
            metrics_.delivery_latencies.push_back(now - st->second);

        json j;
        j["type"] = "wcprb-deliver";
        j["process"] = p;
        j["time"] = now;
        j["cert"] = to_hex(rec.cert_digest);
        j["subnet"] = to_hex(rec.subnet_key);
        j["prev"] = to_hex(rec.prev);
        j["next"] = to_hex(rec.next);
        std::vector<std::string> dep_hex;
        for (const auto& d : rec.deps) dep_hex.push_back(to_hex(d));
        j["deps"] = dep_hex;
        j["pending"] = rec.pending_size;
        emit(j);
    }

    size_t node_pending(ProcessId p) const { return nodes_[p].ledger->pending().size(); }

    // ----------------------------------------------------------- summary
    void finalize_metrics() {
        auto correct = correct_processes();
        // delivery rate over (honest submission, correct process) pairs
        std::map<Digest32, std::set<ProcessId>> seen;
        std::set<Digest32> honest_msgs;
        for (const auto& [digest, t] : submit_times_) honest_msgs.insert(digest);
        for (const auto& r : deliver_records_)
            if (correct.contains(r.process)) seen[r.cert_digest].insert(r.process);
        uint64_t pairs = 0;
        for (const auto& d : honest_msgs) pairs += seen[d].size();
        uint64_t want = metrics_.honest_submissions * correct.size();
        metrics_.delivery_rate = want ? static_cast<double>(pairs) / static_cast<double>(want) : 1.0;

        uint64_t total = 0;
        for (const auto& node : nodes_) {
            uint64_t c = node.prb->messages_sent();
            total += c;
            metrics_.max_messages_per_process = std::max(metrics_.max_messages_per_process, c);
            metrics_.pending_high_water =
                std::max(metrics_.pending_high_water, node.ledger->pending_high_water());
        }
        metrics_.mean_messages_per_process =
            nodes_.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(nodes_.size());

        metrics_.consistency_violations = audit_consistency(deliver_records_, correct);
        metrics_.weak_causal_violations =
            audit_weak_causal_order(deliver_records_, genesis_digests_, correct);

        json j;
        j["type"] = "summary";
        j["delivery_rate"] = metrics_.delivery_rate;
        j["consistency_violations"] = metrics_.consistency_violations;
        j["weak_causal_violations"] = metrics_.weak_causal_violations;
        j["mean_messages_per_process"] = metrics_.mean_messages_per_process;
        j["max_messages_per_process"] = metrics_.max_messages_per_process;
        j["mean_delivery_latency"] = metrics_.mean_latency();
        j["pending_high_water"] = metrics_.pending_high_water;
        j["gate_drops"] = metrics_.gate_drops;
        j["honest_submissions"] = metrics_.honest_submissions;
        emit(j);
    }

    void emit_config_record() {
        json j;
        j["type"] = "run-config";
        j["n"] = cfg_.n;
        j["f"] = cfg_.f;
        j["seed"] = cfg_.seed;
        j["horizon"] = cfg_.horizon;
        j["K"] = cfg_.K;
        j["validate_at_prb"] = cfg_.validate_at_prb;
        j["subnets"] = cfg_.subnets.size();
        j["echo_size"] = sample_cfg_.echo_size;
        j["echo_threshold"] = sample_cfg_.echo_threshold;
        j["ready_threshold"] = sample_cfg_.ready_threshold;
        j["delivery_threshold"] = sample_cfg_.delivery_threshold;
        j["fanout"] = sample_cfg_.gossip_fanout;
        j["byzantine"] = std::vector<ProcessId>(byzantine_.begin(), byzantine_.end());
        j["muted"] = std::vector<ProcessId>(cfg_.adversary.mute.begin(),
                                            cfg_.adversary.mute.end());
        emit(j);
    }

    void emit_submit_record(double now, size_t s, size_t k, const Digest32& cd, bool accepted,
                            const std::string& err, const SubnetRuntime& rt,
                            const std::vector<cert::Transaction>* txs) {
        json j;
        j["type"] = "submit";
        j["time"] = now;
        j["subnet"] = s;
        j["slot"] = k;
        j["cert"] = to_hex(cd);
        j["accepted"] = accepted;
        if (!err.empty()) j["error"] = err;
        // conservation bookkeeping: post-state totals and batch flows
        std::map<std::string, uint64_t> totals, burned, minted;
        for (const auto& [key, amount] : rt.state.balances) totals[key.second] += amount;
        if (txs) {
            for (const auto& tx : *txs) {
                if (tx.kind == cert::Transaction::Kind::outbound_xs &&
                    tx.message.kind == cert::CrossSubnetMessage::Kind::transfer_asset)
                    burned[tx.message.asset_id] += tx.message.amount;
                if (tx.kind == cert::Transaction::Kind::inbound_mint)
                    minted[tx.asset_id] += tx.amount;
            }
        }
        j["asset_totals"] = totals;
        j["burned"] = burned;
        j["minted"] = minted;
        emit(j);
    }

    void emit(const json& j) { trace_.push_back(j.dump()); }

    SimConfig cfg_;
    CounterRng root_;
    std::optional<CounterRng> net_rng_;
    prb::SampleConfig sample_cfg_;
    std::vector<ProcessId> registry_;
    std::set<ProcessId> registered_;
    std::set<ProcessId> byzantine_;
    std::vector<Node> nodes_;
    std::vector<SubnetRuntime> subnets_;
    std::map<Bytes, cert::StateCommitment> genesis_;
    std::map<Bytes, Digest32> genesis_digests_;
    std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
    uint64_t seq_ = 0;
    std::vector<std::string> trace_;
    std::vector<DeliverRecord> deliver_records_;
    std::map<Digest32, double> submit_times_;  // honest cert digest -> submit time
    std::map<Digest32, bool> sig_cache_;
    std::map<Digest32, bool> cert_cache_;
    MetricsSummary metrics_;
};

}  // namespace topos::simnet
