#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "topos/bytes.hpp"
#include "topos/crypto.hpp"
#include "topos/group.hpp"
#include "topos/ice_frost.hpp"

// Certificate data model: a toy state-transition function standing in for
// the zkVM, a re-execution validity-proof backend behind the proof
// interface, Merkle inclusion proofs for cross-subnet messages, and the
// stateless certificate validation predicate.
namespace topos::cert {

using AccountId = std::string;
using AssetId = std::string;

// Canonical encoding of the subnet's static group public key.
struct SubnetId {
    Bytes key;
    bool operator==(const SubnetId&) const = default;
    auto operator<=>(const SubnetId&) const = default;
};

struct CrossSubnetMessage {
    enum class Kind : uint8_t { transfer_asset = 0, contract_call = 1 };
    Kind kind = Kind::transfer_asset;
    SubnetId target_subnet;
    // transferAsset
    AssetId asset_id;
    AccountId recipient;
    uint64_t amount = 0;
    // callArbitraryContract
    AccountId contract_addr;
    std::string func_name;
    Bytes func_args;

    bool operator==(const CrossSubnetMessage&) const = default;

    static CrossSubnetMessage transfer(SubnetId target, AssetId asset, AccountId to,
                                       uint64_t amount) {
        CrossSubnetMessage m;
        m.kind = Kind::transfer_asset;
        m.target_subnet = std::move(target);
        m.asset_id = std::move(asset);
        m.recipient = std::move(to);
        m.amount = amount;
        return m;
    }
    static CrossSubnetMessage call(SubnetId target, AccountId contract, std::string func,
                                   Bytes args) {
        CrossSubnetMessage m;
        m.kind = Kind::contract_call;
        m.target_subnet = std::move(target);
        m.contract_addr = std::move(contract);
        m.func_name = std::move(func);
        m.func_args = std::move(args);
        return m;
    }

    void encode_into(Writer& w) const {
        w.u8(static_cast<uint8_t>(kind));
        w.bytes(target_subnet.key);
        if (kind == Kind::transfer_asset) {
            w.str(asset_id);
            w.str(recipient);
            w.u64(amount);
        } else {
            w.str(contract_addr);
            w.str(func_name);
            w.bytes(func_args);
        }
    }
    Bytes encode() const {
        Writer w;
        encode_into(w);
        return w.take();
    }
    static CrossSubnetMessage decode_from(Reader& r) {
        CrossSubnetMessage m;
        uint8_t k = r.u8();
        if (k > 1) throw std::out_of_range("bad message kind");
        m.kind = static_cast<Kind>(k);
        m.target_subnet.key = r.bytes();
        if (m.kind == Kind::transfer_asset) {
            m.asset_id = r.str();
            m.recipient = r.str();
            m.amount = r.u64();
        } else {
            m.contract_addr = r.str();
            m.func_name = r.str();
            m.func_args = r.bytes();
        }
        return m;
    }

    Digest32 digest() const { return tagged_hash("tce/xs-message", encode()); }
};

struct Transaction {
    enum class Kind : uint8_t { local_transfer = 0, outbound_xs = 1, inbound_mint = 2 };
    Kind kind = Kind::local_transfer;
    AccountId from;
    // local_transfer
    AccountId to;
    AssetId asset_id;
    uint64_t amount = 0;
    // outbound_xs
    CrossSubnetMessage message;
    // inbound_mint
    Digest32 source_digest{};  // digest of the justifying cross-subnet message

    bool operator==(const Transaction&) const = default;

    static Transaction local(AccountId from, AccountId to, AssetId asset, uint64_t amount) {
        Transaction t;
        t.kind = Kind::local_transfer;
        t.from = std::move(from);
        t.to = std::move(to);
        t.asset_id = std::move(asset);
        t.amount = amount;
        return t;
    }
    static Transaction outbound(AccountId from, CrossSubnetMessage m) {
        Transaction t;
        t.kind = Kind::outbound_xs;
        t.from = std::move(from);
        t.message = std::move(m);
        return t;
    }
    static Transaction mint(Digest32 source, AccountId recipient, AssetId asset,
                            uint64_t amount) {
        Transaction t;
        t.kind = Kind::inbound_mint;
        t.source_digest = source;
        t.to = std::move(recipient);
        t.asset_id = std::move(asset);
        t.amount = amount;
        return t;
    }

    void encode_into(Writer& w) const {
        w.u8(static_cast<uint8_t>(kind));
        switch (kind) {
            case Kind::local_transfer:
                w.str(from);
                w.str(to);
                w.str(asset_id);
                w.u64(amount);
                break;
            case Kind::outbound_xs:
                w.str(from);
                message.encode_into(w);
                break;
            case Kind::inbound_mint:
                w.raw(source_digest);
                w.str(to);
                w.str(asset_id);
                w.u64(amount);
                break;
        }
    }
    Bytes encode() const {
        Writer w;
        encode_into(w);
        return w.take();
    }
    static Transaction decode_from(Reader& r) {
        Transaction t;
        uint8_t k = r.u8();
        if (k > 2) throw std::out_of_range("bad tx kind");
        t.kind = static_cast<Kind>(k);
        switch (t.kind) {
            case Kind::local_transfer:
                t.from = r.str();
                t.to = r.str();
                t.asset_id = r.str();
                t.amount = r.u64();
                break;
            case Kind::outbound_xs:
                t.from = r.str();
                t.message = CrossSubnetMessage::decode_from(r);
                break;
            case Kind::inbound_mint:
                t.source_digest = r.fixed<32>();
                t.to = r.str();
                t.asset_id = r.str();
                t.amount = r.u64();
                break;
        }
        return t;
    }
    static std::optional<Transaction> decode(const Bytes& b) {
        try {
            Reader r(b);
            auto t = decode_from(r);
            if (!r.done()) return std::nullopt;
            return t;
        } catch (const std::out_of_range&) {
            return std::nullopt;
        }
    }
};

struct StateCommitment {
    Digest32 digest{};
    bool operator==(const StateCommitment&) const = default;
    auto operator<=>(const StateCommitment&) const = default;
};

struct SubnetState {
    std::map<std::pair<AccountId, AssetId>, uint64_t> balances;
    std::set<Digest32> received_log;  // applied inbound message digests
    uint64_t height = 0;

    bool operator==(const SubnetState&) const = default;

    uint64_t balance(const AccountId& a, const AssetId& asset) const {
        auto it = balances.find({a, asset});
        return it == balances.end() ? 0 : it->second;
    }

    Bytes encode() const {
        Writer w;
        w.u64(height);
        w.u32(static_cast<uint32_t>(balances.size()));
        for (const auto& [k, v] : balances) {
            w.str(k.first);
            w.str(k.second);
            w.u64(v);
        }
        w.u32(static_cast<uint32_t>(received_log.size()));
        for (const auto& d : received_log) w.raw(d);
        return w.take();
    }
    static SubnetState decode_from(Reader& r) {
        SubnetState s;
        s.height = r.u64();
        uint32_t nb = r.u32();
        for (uint32_t i = 0; i < nb; ++i) {
            auto acct = r.str();
            auto asset = r.str();
            s.balances[{acct, asset}] = r.u64();
        }
        uint32_t nr = r.u32();
        for (uint32_t i = 0; i < nr; ++i) s.received_log.insert(r.fixed<32>());
        return s;
    }

    StateCommitment commitment() const {
        return {tagged_hash("tce/subnet-state", encode())};
    }
};

// Applies a batch atomically: any bad transaction rejects the whole batch.
// Outbound transfers burn on the sending side; inbound mints are recorded
// in the received log so re-applying the same message is impossible.
inline std::optional<SubnetState> apply_stf(const SubnetState& state,
                                            const std::vector<Transaction>& txs,
                                            std::string* error = nullptr) {
    auto fail = [&](const std::string& why) -> std::optional<SubnetState> {
        if (error) *error = why;
        return std::nullopt;
    };
    SubnetState s = state;
    for (const auto& tx : txs) {
        switch (tx.kind) {
            case Transaction::Kind::local_transfer: {
                if (tx.amount == 0) return fail("zero-amount transfer");
                auto have = s.balance(tx.from, tx.asset_id);
                if (have < tx.amount) return fail("insufficient balance");
                s.balances[{tx.from, tx.asset_id}] = have - tx.amount;
                s.balances[{tx.to, tx.asset_id}] += tx.amount;
                break;
            }
            case Transaction::Kind::outbound_xs: {
                if (tx.message.kind == CrossSubnetMessage::Kind::transfer_asset) {
                    if (tx.message.amount == 0) return fail("zero-amount transfer");
                    auto have = s.balance(tx.from, tx.message.asset_id);
                    if (have < tx.message.amount) return fail("insufficient balance");
                    s.balances[{tx.from, tx.message.asset_id}] = have - tx.message.amount;
                }
                break;
            }
            case Transaction::Kind::inbound_mint: {
                if (tx.amount == 0) return fail("zero-amount mint");
                if (s.received_log.contains(tx.source_digest))
                    return fail("duplicate inbound mint");
                s.received_log.insert(tx.source_digest);
                s.balances[{tx.to, tx.asset_id}] += tx.amount;
                break;
            }
        }
    }
    s.height += 1;
    return s;
}

// ---------------------------------------------------------------------------
// Merkle tree over canonical transaction encodings: binary, duplicate-last
// padding, domain-separated leaf/node hashing.

inline Digest32 merkle_leaf_hash(const Bytes& leaf) { return tagged_hash("tce/merkle-leaf", leaf); }

inline Digest32 merkle_node_hash(const Digest32& l, const Digest32& r) {
    Writer w;
    w.raw(l);
    w.raw(r);
    return tagged_hash("tce/merkle-node", w.out());
}

inline Digest32 merkle_root(const std::vector<Bytes>& leaves) {
    if (leaves.empty()) return tagged_hash("tce/merkle-empty", {});
    std::vector<Digest32> level;
    level.reserve(leaves.size());
    for (const auto& l : leaves) level.push_back(merkle_leaf_hash(l));
    while (level.size() > 1) {
        if (level.size() % 2) level.push_back(level.back());
        std::vector<Digest32> next;
        next.reserve(level.size() / 2);
        for (size_t i = 0; i < level.size(); i += 2)
            next.push_back(merkle_node_hash(level[i], level[i + 1]));
        level = std::move(next);
    }
    return level[0];
}

struct MerklePath {
    uint32_t index = 0;
    std::vector<Digest32> siblings;

    bool operator==(const MerklePath&) const = default;

    bool verify(const Bytes& leaf, const Digest32& root) const {
        Digest32 acc = merkle_leaf_hash(leaf);
        uint32_t pos = index;
        for (const auto& sib : siblings) {
            acc = (pos & 1) ? merkle_node_hash(sib, acc) : merkle_node_hash(acc, sib);
            pos >>= 1;
        }
        return acc == root;
    }

    void encode_into(Writer& w) const {
        w.u32(index);
        w.u32(static_cast<uint32_t>(siblings.size()));
        for (const auto& s : siblings) w.raw(s);
    }
    static MerklePath decode_from(Reader& r) {
        MerklePath p;
        p.index = r.u32();
        uint32_t n = r.u32();
        for (uint32_t i = 0; i < n; ++i) p.siblings.push_back(r.fixed<32>());
        return p;
    }
};

inline MerklePath merkle_path(const std::vector<Bytes>& leaves, uint32_t index) {
    MerklePath p;
    p.index = index;
    std::vector<Digest32> level;
    for (const auto& l : leaves) level.push_back(merkle_leaf_hash(l));
    uint32_t pos = index;
    while (level.size() > 1) {
        if (level.size() % 2) level.push_back(level.back());
        p.siblings.push_back(level[pos ^ 1]);
        std::vector<Digest32> next;
        for (size_t i = 0; i < level.size(); i += 2)
            next.push_back(merkle_node_hash(level[i], level[i + 1]));
        level = std::move(next);
        pos >>= 1;
    }
    return p;
}

// ---------------------------------------------------------------------------
// Validity proof with a re-execution backend: the proof carries the batch
// and a pre-state witness; verification re-runs the batch. The verifier
// holds no subnet state.

struct TransitionProof {
    std::vector<Transaction> tx_batch;
    SubnetState pre_state;  // witness
    Digest32 batch_root{};
    Digest32 binding{};

    bool operator==(const TransitionProof&) const = default;

    static Digest32 bind(const StateCommitment& prev, const StateCommitment& next,
                         const Digest32& root) {
        Writer w;
        w.raw(prev.digest);
        w.raw(next.digest);
        w.raw(root);
        return tagged_hash("tce/proof-binding", w.out());
    }

    void encode_into(Writer& w) const {
        w.u32(static_cast<uint32_t>(tx_batch.size()));
        for (const auto& tx : tx_batch) {
            Writer tw;
            tx.encode_into(tw);
            w.bytes(tw.out());
        }
        w.bytes(pre_state.encode());
        w.raw(batch_root);
        w.raw(binding);
    }
    static TransitionProof decode_from(Reader& r) {
        TransitionProof p;
        uint32_t n = r.u32();
        for (uint32_t i = 0; i < n; ++i) {
            auto b = r.bytes();
            auto tx = Transaction::decode(b);
            if (!tx) throw std::out_of_range("bad tx in proof");
            p.tx_batch.push_back(*tx);
        }
        auto sb = r.bytes();
        Reader sr(sb);
        p.pre_state = SubnetState::decode_from(sr);
        p.batch_root = r.fixed<32>();
        p.binding = r.fixed<32>();
        return p;
    }
};

inline std::vector<Bytes> batch_leaves(const std::vector<Transaction>& txs) {
    std::vector<Bytes> leaves;
    leaves.reserve(txs.size());
    for (const auto& tx : txs) leaves.push_back(tx.encode());
    return leaves;
}

inline std::optional<std::pair<TransitionProof, StateCommitment>> prove_transition(
    const SubnetState& prev, const std::vector<Transaction>& txs, std::string* error = nullptr) {
    auto next = apply_stf(prev, txs, error);
    if (!next) return std::nullopt;
    TransitionProof p;
    p.tx_batch = txs;
    p.pre_state = prev;
    p.batch_root = merkle_root(batch_leaves(txs));
    auto next_commit = next->commitment();
    p.binding = TransitionProof::bind(prev.commitment(), next_commit, p.batch_root);
    return std::pair{std::move(p), next_commit};
}

// Verif_C: valid iff the witness matches the previous commitment and
// re-executing the committed batch reproduces the new commitment.
inline bool verify_transition(const TransitionProof& proof, const StateCommitment& prev,
                              const StateCommitment& next) {
    if (proof.pre_state.commitment() != prev) return false;
    if (merkle_root(batch_leaves(proof.tx_batch)) != proof.batch_root) return false;
    if (proof.binding != TransitionProof::bind(prev, next, proof.batch_root)) return false;
    auto replayed = apply_stf(proof.pre_state, proof.tx_batch);
    return replayed && replayed->commitment() == next;
}

struct InclusionProof {
    Bytes leaf;  // canonical encoding of the committed outbound transaction
    MerklePath path;
    bool operator==(const InclusionProof&) const = default;

    void encode_into(Writer& w) const {
        w.bytes(leaf);
        path.encode_into(w);
    }
    static InclusionProof decode_from(Reader& r) {
        InclusionProof p;
        p.leaf = r.bytes();
        p.path = MerklePath::decode_from(r);
        return p;
    }
};

struct Certificate {
    SubnetId subnet_id;
    StateCommitment prev_state_hash;
    StateCommitment state_hash;
    TransitionProof proof;
    std::vector<CrossSubnetMessage> xs_list;
    std::vector<InclusionProof> proof_xs_list;
    Bytes signature;  // encoded threshold signature over all prior fields

    bool operator==(const Certificate&) const = default;

    Bytes signing_payload() const {
        Writer w;
        encode_body(w);
        return w.take();
    }
    Bytes encode() const {
        Writer w;
        encode_body(w);
        w.bytes(signature);
        return w.take();
    }
    static std::optional<Certificate> decode(const Bytes& b) {
        try {
            Reader r(b);
            auto c = decode_body(r);
            c.signature = r.bytes();
            if (!r.done()) return std::nullopt;
            return c;
        } catch (const std::out_of_range&) {
            return std::nullopt;
        }
    }

    Digest32 digest() const { return tagged_hash("tce/certificate", encode()); }

    // Subnets addressed by this certificate's cross-subnet messages.
    std::set<SubnetId> addressed_subnets() const {
        std::set<SubnetId> out;
        for (const auto& m : xs_list) out.insert(m.target_subnet);
        return out;
    }

private:
    void encode_body(Writer& w) const {
        w.bytes(subnet_id.key);
        w.raw(prev_state_hash.digest);
        w.raw(state_hash.digest);
        Writer pw;
        proof.encode_into(pw);
        w.bytes(pw.out());
        w.u32(static_cast<uint32_t>(xs_list.size()));
        for (const auto& m : xs_list) m.encode_into(w);
        w.u32(static_cast<uint32_t>(proof_xs_list.size()));
        for (const auto& p : proof_xs_list) p.encode_into(w);
    }
    static Certificate decode_body(Reader& r) {
        Certificate c;
        c.subnet_id.key = r.bytes();
        c.prev_state_hash.digest = r.fixed<32>();
        c.state_hash.digest = r.fixed<32>();
        auto pb = r.bytes();
        Reader pr(pb);
        c.proof = TransitionProof::decode_from(pr);
        uint32_t nx = r.u32();
        for (uint32_t i = 0; i < nx; ++i) c.xs_list.push_back(CrossSubnetMessage::decode_from(r));
        uint32_t np = r.u32();
        for (uint32_t i = 0; i < np; ++i)
            c.proof_xs_list.push_back(InclusionProof::decode_from(r));
        return c;
    }
};

// Verify_incl: every listed message has a Merkle path into the committed
// batch root and corresponds to an outbound transaction carrying it.
inline bool verify_inclusion(const Certificate& cert) {
    if (cert.xs_list.size() != cert.proof_xs_list.size()) return false;
    for (size_t i = 0; i < cert.xs_list.size(); ++i) {
        const auto& ip = cert.proof_xs_list[i];
        if (!ip.path.verify(ip.leaf, cert.proof.batch_root)) return false;
        auto tx = Transaction::decode(ip.leaf);
        if (!tx || tx->kind != Transaction::Kind::outbound_xs) return false;
        if (!(tx->message == cert.xs_list[i])) return false;
    }
    return true;
}

// Certificate validation predicate: stateless, hence monotonic.
inline bool valid_cert(const Certificate& cert) {
    return verify_transition(cert.proof, cert.prev_state_hash, cert.state_hash) &&
           verify_inclusion(cert);
}

template <GroupBackend G>
bool verify_cert_signature(const Certificate& cert) {
    auto key = G::element_decode(cert.subnet_id.key);
    if (!key) return false;
    auto sig = ice_frost::ThresholdSignature<G>::decode(cert.signature);
    if (!sig) return false;
    return ice_frost::verify_signature<G>(*key, cert.signing_payload(), *sig);
}

// Build a certificate for a batch and have a signing quorum authenticate
// it. The xs_list carries every outbound message of the batch in order.
template <GroupBackend G>
std::optional<Certificate> build_and_sign_certificate(
    const std::map<ice_frost::Index, ice_frost::KeyMaterial<G>>& holders,
    const std::set<ice_frost::Index>& signer_set, const SubnetState& prev,
    const std::vector<Transaction>& txs, CounterRng& rng, std::string* error = nullptr) {
    auto proven = prove_transition(prev, txs, error);
    if (!proven) return std::nullopt;
    Certificate c;
    c.subnet_id.key = G::element_encode(holders.begin()->second.group_key);
    c.prev_state_hash = prev.commitment();
    c.state_hash = proven->second;
    c.proof = std::move(proven->first);
    auto leaves = batch_leaves(txs);
    for (uint32_t i = 0; i < txs.size(); ++i) {
        if (txs[i].kind != Transaction::Kind::outbound_xs) continue;
        if (txs[i].message.target_subnet == c.subnet_id) {
            if (error) *error = "cross-subnet message addressed to its own subnet";
            return std::nullopt;
        }
        c.xs_list.push_back(txs[i].message);
        c.proof_xs_list.push_back({leaves[i], merkle_path(leaves, i)});
    }
    auto sig = ice_frost::threshold_sign<G>(holders, signer_set, c.signing_payload(), rng);
    if (!sig) {
        if (error) *error = "signing aborted";
        return std::nullopt;
    }
    c.signature = sig->encode();
    return c;
}

}  // namespace topos::cert
