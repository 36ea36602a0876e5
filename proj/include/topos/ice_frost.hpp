#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "topos/bytes.hpp"
#include "topos/crypto.hpp"
#include "topos/group.hpp"
#include "topos/rng.hpp"

// Robust threshold Schnorr: distributed key generation with identifiable
// misbehavior and exclusion, two-round signing, and share refresh that
// keeps the group public key static across membership changes.
namespace topos::ice_frost {

using Index = uint32_t;

// Context string binding proofs to one session (replay protection).
struct Context {
    std::string session_id;
    uint64_t epoch = 0;
    Bytes subnet_tag;

    Bytes encode() const {
        Writer w;
        w.str(session_id);
        w.u64(epoch);
        w.bytes(subnet_tag);
        return w.take();
    }
};

template <GroupBackend G>
struct SchnorrPoK {
    typename G::Element R;
    typename G::Scalar mu;
};

template <GroupBackend G>
typename G::Scalar pok_challenge(const std::string& tag, Index i, const Context& ctx,
                                 const typename G::Element& pub, const typename G::Element& R) {
    Writer w;
    w.u32(i);
    w.bytes(ctx.encode());
    w.bytes(G::element_encode(pub));
    w.bytes(G::element_encode(R));
    return hash_to_scalar<G>(tag, w.out());
}

template <GroupBackend G>
SchnorrPoK<G> make_pok(const std::string& tag, Index i, const Context& ctx,
                       const typename G::Scalar& secret, const typename G::Element& pub,
                       CounterRng& rng) {
    auto k = random_nonzero_scalar<G>(rng);
    auto R = G::base_pow(k);
    auto c = pok_challenge<G>(tag, i, ctx, pub, R);
    return {R, G::scalar_add(k, G::scalar_mul(secret, c))};
}

template <GroupBackend G>
bool verify_pok(const std::string& tag, Index i, const Context& ctx,
                const typename G::Element& pub, const SchnorrPoK<G>& pok) {
    auto c = pok_challenge<G>(tag, i, ctx, pub, pok.R);
    // R ?= g^mu * pub^{-c}
    auto rhs = G::mul(G::base_pow(pok.mu), G::pow(pub, G::scalar_neg(c)));
    return pok.R == rhs;
}

template <GroupBackend G>
struct Round1Broadcast {
    Index sender = 0;
    bool is_dealer = false;
    std::vector<typename G::Element> commitments;  // phi_{i0..i(t-1)}, empty for non-dealers
    SchnorrPoK<G> secret_pok;                      // sigma_i, knowledge of a_{i0}
    typename G::Element eph_pk;                    // pk_i
    SchnorrPoK<G> key_pok;                         // tau_i, knowledge of sk_i
};

// Discrete-log-equality proof that a revealed DH element is well-formed:
// pk_i = g^{sk_i} and dh = pk_l^{sk_i} for the same sk_i.
template <GroupBackend G>
struct DleqProof {
    typename G::Element A1;
    typename G::Element A2;
    typename G::Scalar z;
};

template <GroupBackend G>
struct Complaint {
    Index accuser = 0;
    Index accused = 0;
    typename G::Element revealed_dh;
    DleqProof<G> proof;
};

template <GroupBackend G>
typename G::Scalar dleq_challenge(const typename G::Element& pk_i, const typename G::Element& pk_l,
                                  const typename G::Element& dh, const DleqProof<G>& p) {
    Writer w;
    w.bytes(G::element_encode(pk_i));
    w.bytes(G::element_encode(pk_l));
    w.bytes(G::element_encode(dh));
    w.bytes(G::element_encode(p.A1));
    w.bytes(G::element_encode(p.A2));
    return hash_to_scalar<G>("tce/dleq", w.out());
}

template <GroupBackend G>
bool verify_dleq(const typename G::Element& pk_i, const typename G::Element& pk_l,
                 const typename G::Element& dh, const DleqProof<G>& p) {
    auto h = dleq_challenge<G>(pk_i, pk_l, dh, p);
    bool ok1 = G::mul(p.A1, G::pow(pk_i, h)) == G::base_pow(p.z);
    bool ok2 = G::mul(p.A2, G::pow(dh, h)) == G::pow(pk_l, p.z);
    return ok1 && ok2;
}

template <GroupBackend G>
struct KeyMaterial {
    Index index = 0;
    typename G::Scalar share;                // s_i
    typename G::Element verification_share;  // Y_i = g^{s_i}
    typename G::Element group_key;           // Y
    uint64_t epoch = 0;
    uint32_t threshold = 0;
    std::set<Index> holders;  // qualified participant indices of this epoch
};

// Everything published on the bulletin board during one keygen/refresh
// attempt; adjudication and verification-share computation replay from it.
template <GroupBackend G>
struct KeygenTranscript {
    uint32_t t = 0;
    Context ctx;
    std::map<Index, Round1Broadcast<G>> round1;
    std::map<std::pair<Index, Index>, Bytes> ciphertexts;  // (dealer, recipient) -> e
};

// g^{f_l(i)} from the dealer's public commitment vector: prod_k phi_{lk}^{i^k}.
template <GroupBackend G>
typename G::Element commitment_eval(const std::vector<typename G::Element>& commitments, Index i) {
    auto acc = G::identity();
    auto x = G::scalar_from_u64(i);
    auto xpow = G::scalar_one();
    for (const auto& phi : commitments) {
        acc = G::mul(acc, G::pow(phi, xpow));
        xpow = G::scalar_mul(xpow, x);
    }
    return acc;
}

// Y_i from the public transcript alone: prod over qualified dealers of
// prod_k phi_{jk}^{i^k}.
template <GroupBackend G>
typename G::Element compute_verification_share(const KeygenTranscript<G>& transcript,
                                               const std::set<Index>& qualified_dealers, Index i) {
    auto acc = G::identity();
    for (Index j : qualified_dealers) {
        const auto& r1 = transcript.round1.at(j);
        acc = G::mul(acc, commitment_eval<G>(r1.commitments, i));
    }
    return acc;
}

struct Verdict {
    Index excluded = 0;
    std::string reason;
};

// Deterministic complaint adjudication from the public transcript. Every
// honest verifier reaches the same verdict.
template <GroupBackend G>
Verdict adjudicate_complaint(const Complaint<G>& c, const KeygenTranscript<G>& transcript) {
    auto it_i = transcript.round1.find(c.accuser);
    auto it_l = transcript.round1.find(c.accused);
    if (it_i == transcript.round1.end()) return {c.accuser, "unknown accuser"};
    if (it_l == transcript.round1.end()) return {c.accuser, "unknown accused"};
    const auto& pk_i = it_i->second.eph_pk;
    const auto& pk_l = it_l->second.eph_pk;
    if (!verify_dleq<G>(pk_i, pk_l, c.revealed_dh, c.proof))
        return {c.accuser, "invalid dh proof"};
    auto ct = transcript.ciphertexts.find({c.accused, c.accuser});
    if (ct == transcript.ciphertexts.end())
        return {c.accused, "dealer published no share ciphertext"};
    auto key = derive_symmetric_key<G>(c.revealed_dh);
    auto plain = sym_decrypt(key, ct->second);
    if (!plain) return {c.accused, "ciphertext does not decrypt"};
    auto share = G::scalar_decode(*plain);
    if (!share) return {c.accused, "decrypted share malformed"};
    auto expected = commitment_eval<G>(it_l->second.commitments, c.accuser);
    if (G::base_pow(*share) == expected) return {c.accuser, "complained about a correct share"};
    return {c.accused, "share fails commitment check"};
}

struct KeygenParams {
    uint32_t t = 0;
    std::set<Index> dealers;    // parties contributing a polynomial
    std::set<Index> receivers;  // parties ending with a share (== dealers for fresh keygen)
    Context ctx;
    uint32_t abort_floor = 0;  // minimum surviving dealers; 0 -> max(t, ceil(2n/3))

    uint32_t effective_floor() const {
        if (abort_floor) return abort_floor;
        uint32_t n = static_cast<uint32_t>(dealers.size());
        return std::max(t, (2 * n + 2) / 3);
    }
};

enum class KeygenPhase { round1, round2, done, aborted };

// One participant's state across the two keygen rounds. Also used for
// share refresh: a refresh dealer's constant term is fixed to
// lambda_l * s_l and verifiers pin its first commitment to Y_l^{lambda_l},
// so the dealt polynomial beyond the pinned term is a sharing of zero.
template <GroupBackend G>
class KeygenSession {
public:
    using Scalar = typename G::Scalar;
    using Element = typename G::Element;

    KeygenSession(KeygenParams params, Index my_index, CounterRng rng)
        : params_(std::move(params)), my_index_(my_index), rng_(std::move(rng)) {
        if (params_.t == 0) throw std::invalid_argument("threshold must be positive");
        if (!params_.receivers.contains(my_index_) && !params_.dealers.contains(my_index_))
            throw std::invalid_argument("index not in session");
        if (is_dealer()) {
            coeffs_.reserve(params_.t);
            for (uint32_t j = 0; j < params_.t; ++j) coeffs_.push_back(G::random_scalar(rng_));
        }
        eph_sk_ = random_nonzero_scalar<G>(rng_);
        eph_pk_ = G::base_pow(eph_sk_);
    }

    // Refresh dealing: fix the constant term (lambda-weighted old share).
    void pin_constant(const Scalar& constant) {
        if (!is_dealer()) throw std::logic_error("only dealers have a polynomial");
        coeffs_[0] = constant;
    }

    // Constant commitments every verifier must see from each dealer
    // (refresh binds phi_{l0} to Y_l^{lambda_l}).
    void set_expected_constants(const std::map<Index, Element>& expected) {
        expected_const_ = expected;
    }

    bool is_dealer() const { return params_.dealers.contains(my_index_); }
    Index index() const { return my_index_; }
    KeygenPhase phase() const { return phase_; }
    const std::set<Index>& excluded() const { return excluded_; }
    const KeygenParams& params() const { return params_; }

    Round1Broadcast<G> round1() {
        if (phase_ != KeygenPhase::round1) throw std::logic_error("round1 already done");
        Round1Broadcast<G> out;
        out.sender = my_index_;
        out.is_dealer = is_dealer();
        out.eph_pk = eph_pk_;
        out.key_pok = make_pok<G>("tce/pok-key", my_index_, params_.ctx, eph_sk_, eph_pk_, rng_);
        if (is_dealer()) {
            for (const auto& a : coeffs_) out.commitments.push_back(G::base_pow(a));
            out.secret_pok = make_pok<G>("tce/pok-secret", my_index_, params_.ctx, coeffs_[0],
                                         out.commitments[0], rng_);
        }
        return out;
    }

    // Returns false when the sender is rejected (and records the exclusion).
    bool receive_round1(const Round1Broadcast<G>& msg) {
        Index from = msg.sender;
        if (from == my_index_) return true;
        bool dealer = params_.dealers.contains(from);
        if (dealer != msg.is_dealer) return exclude(from);
        if (!verify_pok<G>("tce/pok-key", from, params_.ctx, msg.eph_pk, msg.key_pok))
            return exclude(from);
        if (dealer) {
            if (msg.commitments.size() != params_.t) return exclude(from);
            if (!verify_pok<G>("tce/pok-secret", from, params_.ctx, msg.commitments[0],
                               msg.secret_pok))
                return exclude(from);
            if (!expected_const_.empty()) {
                auto it = expected_const_.find(from);
                if (it == expected_const_.end() || !(msg.commitments[0] == it->second))
                    return exclude(from);
            }
            commitments_[from] = msg.commitments;
        }
        eph_pks_[from] = msg.eph_pk;
        return true;
    }

    uint32_t remaining_dealers() const {
        uint32_t n = 0;
        for (Index d : params_.dealers)
            if (!excluded_.contains(d)) ++n;
        return n;
    }

    // Advance past round 1; false means abort (too few dealers survive).
    bool begin_round2() {
        if (phase_ != KeygenPhase::round1) throw std::logic_error("not in round1");
        if (remaining_dealers() < params_.effective_floor()) {
            phase_ = KeygenPhase::aborted;
            return false;
        }
        phase_ = KeygenPhase::round2;
        return true;
    }

    // Published entry ((i, recipient), e): share of f_i(recipient) under the
    // pairwise DH key.
    Bytes round2_send(Index recipient) {
        if (phase_ != KeygenPhase::round2) throw std::logic_error("not in round2");
        if (!is_dealer()) throw std::logic_error("non-dealer sends no shares");
        if (excluded_.contains(recipient)) throw std::invalid_argument("recipient excluded");
        auto share = poly_eval<G>(coeffs_, G::scalar_from_u64(recipient));
        auto key = pairwise_key(recipient);
        return sym_encrypt(key, G::scalar_encode(share));
    }

    // Malicious dealer: a wrong share encrypted under the correct pairwise
    // key (test and adversary-script hook).
    Bytes round2_send_corrupted(Index recipient) {
        if (phase_ != KeygenPhase::round2) throw std::logic_error("not in round2");
        auto share = poly_eval<G>(coeffs_, G::scalar_from_u64(recipient));
        share = G::scalar_add(share, G::scalar_one());
        return sym_encrypt(pairwise_key(recipient), G::scalar_encode(share));
    }

    // Malicious accuser: a complaint with a well-formed dh proof against a
    // dealer whose share was actually correct.
    Complaint<G> forge_complaint(Index dealer) {
        return complain(dealer, G::pow(eph_pks_.at(dealer), eph_sk_));
    }

    std::variant<std::monostate, Complaint<G>> round2_receive(Index from, const Bytes& ciphertext) {
        if (phase_ != KeygenPhase::round2) throw std::logic_error("not in round2");
        if (excluded_.contains(from)) return std::monostate{};
        auto dh = G::pow(eph_pks_.at(from), eph_sk_);
        auto plain = sym_decrypt(derive_symmetric_key<G>(dh), ciphertext);
        if (!plain) return complain(from, dh);
        auto share = G::scalar_decode(*plain);
        if (!share) return complain(from, dh);
        auto expected = commitment_eval<G>(commitments_.at(from), my_index_);
        if (!(G::base_pow(*share) == expected)) return complain(from, dh);
        shares_received_[from] = *share;
        return std::monostate{};
    }

    void apply_verdict(const Verdict& v) {
        exclude(v.excluded);
        shares_received_.erase(v.excluded);
    }

    std::set<Index> qualified_dealers() const {
        std::set<Index> q;
        for (Index d : params_.dealers)
            if (!excluded_.contains(d)) q.insert(d);
        return q;
    }

    // s_i = sum over qualified dealers of f_l(i); Y = prod phi_{l0}.
    std::optional<KeyMaterial<G>> finalize() {
        if (phase_ != KeygenPhase::round2) throw std::logic_error("not in round2");
        auto qualified = qualified_dealers();
        if (static_cast<uint32_t>(qualified.size()) < params_.effective_floor()) {
            phase_ = KeygenPhase::aborted;
            return std::nullopt;
        }
        auto s = G::scalar_zero();
        auto Y = G::identity();
        for (Index l : qualified) {
            if (l == my_index_) {
                s = G::scalar_add(s, poly_eval<G>(coeffs_, G::scalar_from_u64(my_index_)));
                Y = G::mul(Y, G::base_pow(coeffs_[0]));
            } else {
                auto it = shares_received_.find(l);
                if (it == shares_received_.end()) {
                    phase_ = KeygenPhase::aborted;
                    return std::nullopt;
                }
                s = G::scalar_add(s, it->second);
                Y = G::mul(Y, commitments_.at(l)[0]);
            }
        }
        shares_received_.clear();  // per-dealer shares erased after aggregation
        coeffs_.clear();
        phase_ = KeygenPhase::done;
        KeyMaterial<G> km;
        km.index = my_index_;
        km.share = s;
        km.verification_share = G::base_pow(s);
        km.group_key = Y;
        km.epoch = params_.ctx.epoch;
        km.threshold = params_.t;
        for (Index r : params_.receivers)
            if (!excluded_.contains(r)) km.holders.insert(r);
        return km;
    }

private:
    bool exclude(Index who) {
        excluded_.insert(who);
        return false;
    }

    SymmetricKey pairwise_key(Index other) const {
        auto dh = G::pow(eph_pks_.at(other), eph_sk_);
        return derive_symmetric_key<G>(dh);
    }

    Complaint<G> complain(Index dealer, const typename G::Element& dh) {
        Complaint<G> c;
        c.accuser = my_index_;
        c.accused = dealer;
        c.revealed_dh = dh;
        auto r = random_nonzero_scalar<G>(rng_);
        c.proof.A1 = G::base_pow(r);
        c.proof.A2 = G::pow(eph_pks_.at(dealer), r);
        auto h = dleq_challenge<G>(eph_pk_, eph_pks_.at(dealer), dh, c.proof);
        c.proof.z = G::scalar_add(r, G::scalar_mul(h, eph_sk_));
        return c;
    }

    KeygenParams params_;
    Index my_index_;
    CounterRng rng_;
    std::vector<Scalar> coeffs_;
    Scalar eph_sk_;
    Element eph_pk_;
    std::map<Index, std::vector<Element>> commitments_;
    std::map<Index, Element> eph_pks_;
    std::map<Index, Scalar> shares_received_;
    std::map<Index, Element> expected_const_;
    std::set<Index> excluded_;
    KeygenPhase phase_ = KeygenPhase::round1;
};

// ---------------------------------------------------------------------------
// Signing

template <GroupBackend G>
struct NonceCommitment {
    Index signer = 0;
    typename G::Element D;
    typename G::Element E;
};

template <GroupBackend G>
struct SignatureResponse {
    Index signer = 0;
    typename G::Scalar z;
};

template <GroupBackend G>
struct ThresholdSignature {
    typename G::Element R;
    typename G::Scalar z;

    Bytes encode() const {
        Writer w;
        w.bytes(G::element_encode(R));
        w.bytes(G::scalar_encode(z));
        return w.take();
    }
    static std::optional<ThresholdSignature> decode(const Bytes& b) {
        try {
            Reader r(b);
            auto R = G::element_decode(r.bytes());
            auto z = G::scalar_decode(r.bytes());
            if (!R || !z || !r.done()) return std::nullopt;
            return ThresholdSignature{*R, *z};
        } catch (const std::out_of_range&) {
            return std::nullopt;
        }
    }
};

template <GroupBackend G>
Bytes encode_commitment_list(const std::vector<NonceCommitment<G>>& B) {
    Writer w;
    for (const auto& nc : B) {
        w.u32(nc.signer);
        w.bytes(G::element_encode(nc.D));
        w.bytes(G::element_encode(nc.E));
    }
    return w.take();
}

// rho_l = H1(l, m, B)
template <GroupBackend G>
typename G::Scalar binding_factor(Index l, const Bytes& message,
                                  const std::vector<NonceCommitment<G>>& B) {
    Writer w;
    w.u32(l);
    w.bytes(message);
    w.bytes(encode_commitment_list<G>(B));
    return hash_to_scalar<G>("tce/H1-binding", w.out());
}

// c = H2(R, Y, m)
template <GroupBackend G>
typename G::Scalar signature_challenge(const typename G::Element& R, const typename G::Element& Y,
                                       const Bytes& message) {
    Writer w;
    w.bytes(G::element_encode(R));
    w.bytes(G::element_encode(Y));
    w.bytes(message);
    return hash_to_scalar<G>("tce/H2-challenge", w.out());
}

// R_l = D_l * E_l^{rho_l}; R = prod R_l
template <GroupBackend G>
typename G::Element signer_commitment(const NonceCommitment<G>& nc, const Bytes& message,
                                      const std::vector<NonceCommitment<G>>& B) {
    return G::mul(nc.D, G::pow(nc.E, binding_factor<G>(nc.signer, message, B)));
}

template <GroupBackend G>
typename G::Element group_commitment(const std::vector<NonceCommitment<G>>& B,
                                     const Bytes& message) {
    auto R = G::identity();
    for (const auto& nc : B) R = G::mul(R, signer_commitment<G>(nc, message, B));
    return R;
}

// g^z ?= R * Y^c  with c = H2(R, Y, m)
template <GroupBackend G>
bool verify_signature(const typename G::Element& Y, const Bytes& message,
                      const ThresholdSignature<G>& sig) {
    auto c = signature_challenge<G>(sig.R, Y, message);
    return G::base_pow(sig.z) == G::mul(sig.R, G::pow(Y, c));
}

// One signer's state; nonces are erased when the response is emitted, so a
// session can never sign twice.
template <GroupBackend G>
class SigningSession {
public:
    SigningSession(KeyMaterial<G> key, std::set<Index> signer_set)
        : key_(std::move(key)), signer_set_(std::move(signer_set)) {
        if (!signer_set_.contains(key_.index))
            throw std::invalid_argument("signer not in signer set");
        if (signer_set_.size() < key_.threshold)
            throw std::invalid_argument("signer set below threshold");
    }

    NonceCommitment<G> round1(CounterRng& rng) {
        if (nonces_ || spent_) throw std::logic_error("nonces already drawn");
        auto d = random_nonzero_scalar<G>(rng);
        auto e = random_nonzero_scalar<G>(rng);
        nonces_ = std::pair{d, e};
        return {key_.index, G::base_pow(d), G::base_pow(e)};
    }

    SignatureResponse<G> round2(const Bytes& message, const std::vector<NonceCommitment<G>>& B) {
        if (!nonces_) throw std::logic_error("no live nonces");
        auto [d, e] = *nonces_;
        nonces_.reset();  // deleted before the response leaves the session
        spent_ = true;
        auto rho = binding_factor<G>(key_.index, message, B);
        std::set<Index> S;
        for (const auto& nc : B) S.insert(nc.signer);
        auto lambda = lagrange_coeff<G>(S, key_.index);
        auto R = group_commitment<G>(B, message);
        auto c = signature_challenge<G>(R, key_.group_key, message);
        auto z = G::scalar_add(G::scalar_add(d, G::scalar_mul(e, rho)),
                               G::scalar_mul(G::scalar_mul(lambda, key_.share), c));
        return {key_.index, z};
    }

    const KeyMaterial<G>& key() const { return key_; }

private:
    KeyMaterial<G> key_;
    std::set<Index> signer_set_;
    std::optional<std::pair<typename G::Scalar, typename G::Scalar>> nonces_;
    bool spent_ = false;
};

template <GroupBackend G>
struct AggregateResult {
    std::optional<ThresholdSignature<G>> signature;
    std::vector<Index> bad_signers;
};

// Verify each response against g^{z_l} = R_l * Y_l^{c * lambda_l}; sum the
// good ones only if all pass.
template <GroupBackend G>
AggregateResult<G> aggregate(const std::vector<NonceCommitment<G>>& B, const Bytes& message,
                             const typename G::Element& group_key,
                             const std::map<Index, typename G::Element>& verification_shares,
                             const std::vector<SignatureResponse<G>>& responses) {
    AggregateResult<G> out;
    auto R = group_commitment<G>(B, message);
    auto c = signature_challenge<G>(R, group_key, message);
    std::set<Index> S;
    for (const auto& nc : B) S.insert(nc.signer);
    std::map<Index, const NonceCommitment<G>*> by_signer;
    for (const auto& nc : B) by_signer[nc.signer] = &nc;
    auto z = G::scalar_zero();
    for (const auto& resp : responses) {
        auto lambda = lagrange_coeff<G>(S, resp.signer);
        auto R_l = signer_commitment<G>(*by_signer.at(resp.signer), message, B);
        auto rhs = G::mul(R_l, G::pow(verification_shares.at(resp.signer),
                                      G::scalar_mul(c, lambda)));
        if (!(G::base_pow(resp.z) == rhs)) {
            out.bad_signers.push_back(resp.signer);
            continue;
        }
        z = G::scalar_add(z, resp.z);
    }
    if (out.bad_signers.empty()) out.signature = ThresholdSignature<G>{R, z};
    return out;
}

// Sum responses without the per-response check (test hook for mixed-epoch
// and bad-response scenarios).
template <GroupBackend G>
ThresholdSignature<G> aggregate_unchecked(const std::vector<NonceCommitment<G>>& B,
                                          const Bytes& message,
                                          const typename G::Element& group_key,
                                          const std::vector<SignatureResponse<G>>& responses) {
    auto R = group_commitment<G>(B, message);
    (void)group_key;
    auto z = G::scalar_zero();
    for (const auto& resp : responses) z = G::scalar_add(z, resp.z);
    return {R, z};
}

struct SigningOutcome {
    std::set<Index> excluded;
    uint32_t rounds = 0;
};

// Full signing flow with the retry loop: excluded signers are dropped and
// round 1 restarts with the remainder until a signature verifies or fewer
// than t signers remain.
template <GroupBackend G>
std::optional<ThresholdSignature<G>> threshold_sign(
    const std::map<Index, KeyMaterial<G>>& holders, std::set<Index> S, const Bytes& message,
    CounterRng& rng,
    const std::function<void(Index, typename G::Scalar&)>& tamper = nullptr,
    SigningOutcome* outcome = nullptr) {
    if (holders.empty()) return std::nullopt;
    uint32_t t = holders.begin()->second.threshold;
    const auto& Y = holders.begin()->second.group_key;
    std::map<Index, typename G::Element> vshares;
    for (const auto& [i, km] : holders) vshares[i] = km.verification_share;
    for (uint32_t attempt = 0;; ++attempt) {
        if (S.size() < t) return std::nullopt;
        if (outcome) outcome->rounds = attempt + 1;
        std::map<Index, SigningSession<G>> sessions;
        std::vector<NonceCommitment<G>> B;
        for (Index i : S) {
            auto [it, _] = sessions.emplace(i, SigningSession<G>(holders.at(i), S));
            B.push_back(it->second.round1(rng));
        }
        std::vector<SignatureResponse<G>> responses;
        for (Index i : S) {
            auto r = sessions.at(i).round2(message, B);
            if (tamper) tamper(i, r.z);
            responses.push_back(r);
        }
        auto agg = aggregate<G>(B, message, Y, vshares, responses);
        if (agg.signature) return agg.signature;
        for (Index bad : agg.bad_signers) {
            S.erase(bad);
            if (outcome) outcome->excluded.insert(bad);
        }
    }
}

// ---------------------------------------------------------------------------
// Whole-protocol drivers over a trusted bulletin board (the broadcast
// primitive the keygen rounds assume). The simulator and tests both
// run keygen through these.

struct KeygenMisbehavior {
    std::set<Index> bad_secret_pok;            // corrupt sigma_i
    std::map<Index, Index> bad_share;          // dealer -> victim, share off by one
    std::map<Index, Index> bogus_complaint;    // accuser -> honest dealer accused unjustly
    std::set<Index> withhold_ciphertext;       // dealer publishes nothing
};

template <GroupBackend G>
struct KeygenResult {
    std::map<Index, KeyMaterial<G>> keys;  // empty if aborted
    KeygenTranscript<G> transcript;
    std::set<Index> excluded;
    bool aborted = false;
};

template <GroupBackend G>
KeygenResult<G> run_keygen_attempt(const KeygenParams& params, CounterRng& rng,
                                   const KeygenMisbehavior& misbehave,
                                   const std::map<Index, typename G::Scalar>* pinned_constants,
                                   const std::map<Index, typename G::Element>* expected_consts) {
    KeygenResult<G> out;
    out.transcript.t = params.t;
    out.transcript.ctx = params.ctx;
    std::set<Index> everyone = params.dealers;
    everyone.insert(params.receivers.begin(), params.receivers.end());

    std::map<Index, KeygenSession<G>> sessions;
    for (Index i : everyone) {
        auto [it, _] = sessions.emplace(
            i, KeygenSession<G>(params, i, rng.fork("keygen-session", i)));
        if (pinned_constants && params.dealers.contains(i))
            it->second.pin_constant(pinned_constants->at(i));
        if (expected_consts) it->second.set_expected_constants(*expected_consts);
    }

    // Round 1: broadcast commitments and proofs; everyone verifies everyone.
    std::map<Index, Round1Broadcast<G>> round1;
    for (Index i : everyone) {
        auto msg = sessions.at(i).round1();
        if (misbehave.bad_secret_pok.contains(i) && msg.is_dealer)
            msg.secret_pok.mu = G::scalar_add(msg.secret_pok.mu, G::scalar_one());
        round1[i] = msg;
    }
    out.transcript.round1 = round1;
    for (Index i : everyone)
        for (const auto& [from, msg] : round1) sessions.at(i).receive_round1(msg);
    // Honest parties agree on exclusions (deterministic verification).
    for (Index i : everyone)
        if (!sessions.at(i).begin_round2()) {
            out.aborted = true;
            out.excluded = sessions.at(i).excluded();
            return out;
        }
    std::set<Index> excluded_after_r1 = sessions.begin()->second.excluded();

    // Round 2: encrypted shares on the board.
    for (Index l : params.dealers) {
        if (excluded_after_r1.contains(l)) continue;
        if (misbehave.withhold_ciphertext.contains(l)) continue;
        for (Index i : params.receivers) {
            if (i == l || excluded_after_r1.contains(i)) continue;
            auto it = misbehave.bad_share.find(l);
            bool corrupt = it != misbehave.bad_share.end() && it->second == i;
            Bytes e = corrupt ? sessions.at(l).round2_send_corrupted(i)
                              : sessions.at(l).round2_send(i);
            out.transcript.ciphertexts[{l, i}] = e;
        }
    }

    // Receivers process shares; complaints are adjudicated by everyone.
    std::vector<Complaint<G>> complaints;
    for (Index i : params.receivers) {
        if (excluded_after_r1.contains(i)) continue;
        for (Index l : params.dealers) {
            if (l == i || excluded_after_r1.contains(l)) continue;
            auto ct = out.transcript.ciphertexts.find({l, i});
            if (ct == out.transcript.ciphertexts.end()) {
                // Dealer failed to publish; accuse with a well-formed dh proof.
                auto res = sessions.at(i).round2_receive(l, Bytes{});
                if (auto* c = std::get_if<Complaint<G>>(&res)) complaints.push_back(*c);
                continue;
            }
            auto res = sessions.at(i).round2_receive(l, ct->second);
            if (auto* c = std::get_if<Complaint<G>>(&res)) complaints.push_back(*c);
        }
    }
    for (const auto& [accuser, accused] : misbehave.bogus_complaint) {
        if (excluded_after_r1.contains(accuser) || excluded_after_r1.contains(accused)) continue;
        // A malicious accuser reveals its true dh key against an honest dealer;
        // adjudication decrypts a correct share and turns on the accuser.
        auto res = sessions.at(accuser).forge_complaint(accused);
        complaints.push_back(res);
    }
    for (const auto& c : complaints) {
        auto verdict = adjudicate_complaint<G>(c, out.transcript);
        for (Index i : everyone) sessions.at(i).apply_verdict(verdict);
        out.excluded.insert(verdict.excluded);
    }
    out.excluded.insert(excluded_after_r1.begin(), excluded_after_r1.end());

    for (Index i : params.receivers) {
        if (out.excluded.contains(i)) continue;
        auto km = sessions.at(i).finalize();
        if (!km) {
            out.aborted = true;
            out.keys.clear();
            return out;
        }
        out.keys[i] = *km;
    }
    if (out.keys.empty()) out.aborted = true;
    return out;
}

// Fresh distributed key generation with indices 1..n.
template <GroupBackend G>
KeygenResult<G> run_keygen(uint32_t t, uint32_t n, const Context& ctx, CounterRng& rng,
                           const KeygenMisbehavior& misbehave = {}, uint32_t abort_floor = 0) {
    KeygenParams params;
    params.t = t;
    params.ctx = ctx;
    params.abort_floor = abort_floor;
    for (Index i = 1; i <= n; ++i) {
        params.dealers.insert(i);
        params.receivers.insert(i);
    }
    return run_keygen_attempt<G>(params, rng, misbehave, nullptr, nullptr);
}

// Share refresh: a quorum of current holders deals lambda-weighted shares
// of the standing secret to the (possibly different) new membership. The
// group key is unchanged; the epoch advances. Excluding a dealer changes
// the Lagrange weights, so an attempt with a misbehaving dealer restarts
// with that dealer dropped.
template <GroupBackend G>
KeygenResult<G> run_refresh(const std::map<Index, KeyMaterial<G>>& old_holders,
                            const std::set<Index>& new_members, uint32_t t, Context ctx,
                            CounterRng& rng, const KeygenMisbehavior& misbehave = {}) {
    std::set<Index> dealer_set;
    for (const auto& [i, km] : old_holders) dealer_set.insert(i);
    KeygenResult<G> out;
    for (uint32_t attempt = 0;; ++attempt) {
        if (dealer_set.size() < t) {
            out.aborted = true;
            return out;
        }
        std::map<Index, typename G::Scalar> constants;
        std::map<Index, typename G::Element> expected;
        for (Index l : dealer_set) {
            auto lambda = lagrange_coeff<G>(dealer_set, l);
            constants[l] = G::scalar_mul(lambda, old_holders.at(l).share);
            expected[l] = G::pow(old_holders.at(l).verification_share, lambda);
        }
        KeygenParams params;
        params.t = t;
        params.ctx = ctx;
        params.dealers = dealer_set;
        params.receivers = new_members;
        params.abort_floor = static_cast<uint32_t>(dealer_set.size());  // all-or-restart
        auto rng_attempt = rng.fork("refresh-attempt", attempt);
        out = run_keygen_attempt<G>(params, rng_attempt, misbehave, &constants, &expected);
        if (!out.aborted && out.excluded.empty()) return out;
        bool dropped = false;
        for (Index e : out.excluded)
            if (dealer_set.erase(e)) dropped = true;
        if (!dropped && !out.aborted) return out;  // only receivers excluded
        if (!dropped && out.aborted) return out;
    }
}

}  // namespace topos::ice_frost
