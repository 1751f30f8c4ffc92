#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace medrank {

/// Incremental 64-bit FNV-1a. Used for provenance fingerprints, not security.
class Fnv1a64 {
 public:
  void update(std::span<const unsigned char> bytes) {
    for (unsigned char b : bytes) {
      state_ ^= b;
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) {
    update({reinterpret_cast<const unsigned char*>(s.data()), s.size()});
  }
  template <typename T>
  void update_value(const T& v) {
    update({reinterpret_cast<const unsigned char*>(&v), sizeof(T)});
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace medrank
