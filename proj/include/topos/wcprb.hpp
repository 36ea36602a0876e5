#pragma once

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "topos/certificate.hpp"

// Weak causal probabilistic reliable broadcast: layers dependency tracking
// and per-subnet chain linkage on top of PRB delivery.
namespace topos::wcprb {

// The broadcast unit: a certificate plus full copies of the certificates it
// causally depends on (the inbound certificates consumed since the issuing
// subnet's previous submission).
struct CertificateMessage {
    cert::Certificate certificate;
    std::vector<cert::Certificate> deps;

    Bytes encode() const {
        Writer w;
        w.bytes(certificate.encode());
        w.u32(static_cast<uint32_t>(deps.size()));
        for (const auto& d : deps) w.bytes(d.encode());
        return w.take();
    }

    static std::optional<CertificateMessage> decode(const Bytes& in) {
        try {
            Reader r(in);
            CertificateMessage m;
            auto c = cert::Certificate::decode(r.bytes());
            if (!c) return std::nullopt;
            m.certificate = std::move(*c);
            uint32_t count = r.u32();
            for (uint32_t i = 0; i < count; ++i) {
                auto d = cert::Certificate::decode(r.bytes());
                if (!d) return std::nullopt;
                m.deps.push_back(std::move(*d));
            }
            if (!r.done()) return std::nullopt;
            return m;
        } catch (const std::out_of_range&) {
            return std::nullopt;
        }
    }

    Digest32 digest() const { return tagged_hash("tce/cert-message", encode()); }
};

enum class SubmitError {
    accepted,
    bad_certificate,   // re-execution proof or inclusion proofs do not check out
    missing_deps,      // a declared dependency is not in our history
    broken_linkage,    // prev_state_hash does not extend the subnet's chain
    unknown_subnet,    // no genesis commitment registered
};

// One TCE process's view: per-subnet accepted-certificate histories, the
// outstanding dependency set (only meaningful for subnet members), and the
// pending buffer of prb-delivered but not yet causally-valid messages.
class ProcessLedger {
public:
    struct SubnetHistory {
        std::vector<cert::Certificate> accepted;  // insertion order
        std::set<Digest32> digests;
        cert::StateCommitment tip{};  // latest state_hash on the hash-linked chain
    };

    struct PendingEntry {
        CertificateMessage msg;
        Digest32 digest{};
        uint64_t arrival_tick = 0;
    };

    // subnet: the subnet this process belongs to, or nullopt for a pure TCE
    // process. genesis: state commitment each registered subnet starts from.
    // assume_cert_checked: set when the PRB layer already ran the
    // certificate well-formedness check at its gossip gate, so pending
    // revalidation only needs deps and linkage.
    ProcessLedger(std::optional<cert::SubnetId> subnet, std::map<Bytes, cert::StateCommitment> genesis,
                  bool assume_cert_checked = false)
        : subnet_(std::move(subnet)),
          genesis_(std::move(genesis)),
          assume_cert_checked_(assume_cert_checked) {}

    bool valid_deps(const std::vector<cert::Certificate>& deps) const {
        for (const auto& d : deps) {
            auto it = history_.find(d.subnet_id.key);
            if (it == history_.end() || !it->second.digests.contains(d.digest())) return false;
        }
        return true;  // vacuously true for empty deps
    }

    // Chain linkage: the certificate must extend the latest accepted state
    // of its subnet (or the registered genesis commitment).
    bool linkage_ok(const cert::Certificate& c) const {
        auto tip = current_tip(c.subnet_id.key);
        return tip && c.prev_state_hash == *tip;
    }

    bool valid(const CertificateMessage& m) const {
        return cert::valid_cert(m.certificate) && valid_deps(m.deps) && linkage_ok(m.certificate);
    }

    // The reduced check used once certificate well-formedness has already
    // been established at the PRB gossip gate.
    bool valid_prime(const CertificateMessage& m) const {
        return valid_deps(m.deps) && linkage_ok(m.certificate);
    }

    // Submission-side validation. The signature is attached after this
    // check by the subnet's signing quorum, so it is not examined here.
    SubmitError check_submission(const CertificateMessage& m) const {
        if (!genesis_.contains(m.certificate.subnet_id.key)) return SubmitError::unknown_subnet;
        if (!cert::valid_cert(m.certificate)) return SubmitError::bad_certificate;
        if (!valid_deps(m.deps)) return SubmitError::missing_deps;
        if (!linkage_ok(m.certificate)) return SubmitError::broken_linkage;
        return SubmitError::accepted;
    }

    // Builds this subnet's next submission from the outstanding deps.
    CertificateMessage make_submission(cert::Certificate c) const {
        return {std::move(c), deps_p_};
    }

    // wcprb.Broadcast entry point: on acceptance the caller hands the
    // message to PRB and the dependency set resets; a rejected submission
    // leaves deps_p intact so the causal links are not dropped.
    SubmitError submit(const CertificateMessage& m) {
        SubmitError e = check_submission(m);
        if (e == SubmitError::accepted) {
            deps_p_.clear();
            deps_digests_.clear();
        }
        return e;
    }

    // prb.Deliver handler: park the message, then drain the pending set to
    // fixpoint. Returns the messages wcprb-delivered, in delivery order.
    std::vector<CertificateMessage> on_prb_deliver(const CertificateMessage& m,
                                                   uint64_t arrival_tick = 0) {
        Digest32 d = m.digest();
        if (delivered_.contains(d)) return {};
        for (const auto& p : pending_)
            if (p.digest == d) return {};
        pending_.push_back({m, d, arrival_tick});
        pending_high_water_ = std::max(pending_high_water_, pending_.size());
        return drain_pending();
    }

    // Removes pending entries older than the horizon; they are orphans
    // whose causal prerequisites never arrived.
    size_t gc_before(uint64_t tick) {
        size_t removed = 0;
        std::erase_if(pending_, [&](const PendingEntry& p) {
            if (p.arrival_tick < tick) {
                ++removed;
                return true;
            }
            return false;
        });
        gc_count_ += removed;
        return removed;
    }

    const std::optional<cert::SubnetId>& subnet() const { return subnet_; }
    const std::vector<cert::Certificate>& deps_p() const { return deps_p_; }
    const std::vector<PendingEntry>& pending() const { return pending_; }
    size_t pending_high_water() const { return pending_high_water_; }
    uint64_t gc_count() const { return gc_count_; }
    const std::map<Bytes, SubnetHistory>& tce_state() const { return history_; }

    const SubnetHistory* history(const cert::SubnetId& s) const {
        auto it = history_.find(s.key);
        return it == history_.end() ? nullptr : &it->second;
    }

    bool has_delivered(const Digest32& message_digest) const {
        return delivered_.contains(message_digest);
    }

private:
    std::optional<cert::StateCommitment> current_tip(const Bytes& subnet_key) const {
        auto it = history_.find(subnet_key);
        if (it != history_.end() && !it->second.accepted.empty()) return it->second.tip;
        auto g = genesis_.find(subnet_key);
        if (g == genesis_.end()) return std::nullopt;  // unregistered subnet
        return g->second;
    }

    std::vector<CertificateMessage> drain_pending() {
        std::vector<CertificateMessage> out;
        bool progressed = true;
        while (progressed) {
            progressed = false;
            for (size_t i = 0; i < pending_.size(); ++i) {
                const CertificateMessage& m = pending_[i].msg;
                bool ok = assume_cert_checked_ ? valid_prime(m) : valid(m);
                if (!ok) continue;
                CertificateMessage delivered = m;
                delivered_.insert(pending_[i].digest);
                pending_.erase(pending_.begin() + static_cast<ptrdiff_t>(i));
                on_wcprb_deliver(delivered);
                out.push_back(std::move(delivered));
                progressed = true;  // a delivery may unblock earlier entries
                break;
            }
        }
        return out;
    }

    // State update on wcprb-delivery: file the certificate and each dep
    // under its own subnet's history; if this process's subnet is addressed
    // by the certificate's cross-subnet messages, it becomes a dependency
    // of our next submission.
    void on_wcprb_deliver(const CertificateMessage& m) {
        file(m.certificate);
        for (const auto& d : m.deps) file(d);
        if (!subnet_) return;  // a pure TCE process never updates deps_p
        for (const auto& target : m.certificate.addressed_subnets()) {
            if (target.key == subnet_->key) {
                Digest32 cd = m.certificate.digest();
                if (deps_digests_.insert(cd).second) deps_p_.push_back(m.certificate);
                break;
            }
        }
    }

    void file(const cert::Certificate& c) {
        auto& h = history_[c.subnet_id.key];
        if (!h.digests.insert(c.digest()).second) return;  // set union: dedup
        if (h.accepted.empty() || c.prev_state_hash == h.tip) h.tip = c.state_hash;
        h.accepted.push_back(c);
    }

    std::optional<cert::SubnetId> subnet_;
    std::map<Bytes, cert::StateCommitment> genesis_;
    bool assume_cert_checked_;
    std::map<Bytes, SubnetHistory> history_;
    std::vector<cert::Certificate> deps_p_;
    std::set<Digest32> deps_digests_;
    std::vector<PendingEntry> pending_;
    std::set<Digest32> delivered_;
    size_t pending_high_water_ = 0;
    uint64_t gc_count_ = 0;
};

}  // namespace topos::wcprb
