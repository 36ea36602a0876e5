#pragma once

#include <sodium.h>

#include <optional>
#include <stdexcept>
#include <string>

#include "topos/bytes.hpp"

namespace topos {

inline void ensure_sodium() {
    static const int rc = sodium_init();
    if (rc < 0) throw std::runtime_error("sodium_init failed");
}

inline Digest32 blake2b(const uint8_t* data, size_t len) {
    ensure_sodium();
    Digest32 out;
    crypto_generichash(out.data(), out.size(), data, len, nullptr, 0);
    return out;
}

inline Digest32 blake2b(const Bytes& b) { return blake2b(b.data(), b.size()); }

// Domain-separated hash: H(tag || data), tag length-prefixed so distinct
// tags can never collide by concatenation.
inline Digest32 tagged_hash(const std::string& tag, const Bytes& data) {
    Writer w;
    w.str(tag);
    w.raw(data);
    return blake2b(w.out());
}

inline std::array<uint8_t, 64> tagged_hash64(const std::string& tag, const Bytes& data) {
    ensure_sodium();
    Writer w;
    w.str(tag);
    w.raw(data);
    std::array<uint8_t, 64> out;
    crypto_generichash(out.data(), out.size(), w.out().data(), w.out().size(), nullptr, 0);
    return out;
}

using SymmetricKey = std::array<uint8_t, crypto_secretbox_KEYBYTES>;

// Authenticated encryption (XSalsa20-Poly1305). The nonce is derived from
// key and plaintext, so a given (key, message) pair always produces the
// same ciphertext; transcripts stay replayable.
inline Bytes sym_encrypt(const SymmetricKey& key, const Bytes& plaintext) {
    ensure_sodium();
    Writer w;
    w.raw(key.data(), key.size());
    w.bytes(plaintext);
    Digest32 h = tagged_hash("tce/secretbox-nonce", w.out());
    Bytes out(crypto_secretbox_NONCEBYTES + crypto_secretbox_MACBYTES + plaintext.size());
    std::memcpy(out.data(), h.data(), crypto_secretbox_NONCEBYTES);
    crypto_secretbox_easy(out.data() + crypto_secretbox_NONCEBYTES, plaintext.data(),
                          plaintext.size(), out.data(), key.data());
    return out;
}

inline std::optional<Bytes> sym_decrypt(const SymmetricKey& key, const Bytes& ciphertext) {
    ensure_sodium();
    if (ciphertext.size() < crypto_secretbox_NONCEBYTES + crypto_secretbox_MACBYTES)
        return std::nullopt;
    Bytes out(ciphertext.size() - crypto_secretbox_NONCEBYTES - crypto_secretbox_MACBYTES);
    if (crypto_secretbox_open_easy(out.data(), ciphertext.data() + crypto_secretbox_NONCEBYTES,
                                   ciphertext.size() - crypto_secretbox_NONCEBYTES,
                                   ciphertext.data(), key.data()) != 0)
        return std::nullopt;
    return out;
}

}  // namespace topos
