#pragma once

// Shared vocabulary: contract sides, outcomes, disciplines and the error
// hierarchy used across the library.

#include <array>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace replimarket {

inline constexpr std::size_t kFeatureCount = 41;

enum class Side : std::uint8_t { yes, no };
enum class Action : std::uint8_t { buy, sell };

// R = the claim replicated, NR = it did not.
enum class Outcome : std::uint8_t { replicated, not_replicated };

enum class Domain : std::uint8_t {
  psychology,
  economics,
  marketing,
  sociology,
  political_science,
  education,
  management,
  health,
  criminology,
  public_administration,
};

inline constexpr std::array<Domain, 10> kAllDomains = {
    Domain::psychology,        Domain::economics,   Domain::marketing,
    Domain::sociology,         Domain::political_science,
    Domain::education,         Domain::management,  Domain::health,
    Domain::criminology,       Domain::public_administration,
};

// Error categories map onto distinct CLI exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

inline constexpr Side opposite(Side s) noexcept {
  return s == Side::yes ? Side::no : Side::yes;
}

inline constexpr Side side_for(Outcome o) noexcept {
  return o == Outcome::replicated ? Side::yes : Side::no;
}

inline constexpr double encode(Outcome o) noexcept {
  return o == Outcome::replicated ? 1.0 : 0.0;
}

inline constexpr std::string_view to_string(Side s) noexcept {
  return s == Side::yes ? "yes" : "no";
}

inline constexpr std::string_view to_string(Action a) noexcept {
  return a == Action::buy ? "buy" : "sell";
}

inline constexpr std::string_view to_string(Outcome o) noexcept {
  return o == Outcome::replicated ? "R" : "NR";
}

inline constexpr std::string_view to_string(Domain d) noexcept {
  switch (d) {
    case Domain::psychology: return "psychology";
    case Domain::economics: return "economics";
    case Domain::marketing: return "marketing";
    case Domain::sociology: return "sociology";
    case Domain::political_science: return "political-science";
    case Domain::education: return "education";
    case Domain::management: return "management";
    case Domain::health: return "health";
    case Domain::criminology: return "criminology";
    case Domain::public_administration: return "public-administration";
  }
  return "unknown";
}

inline std::optional<Side> parse_side(std::string_view s) noexcept {
  if (s == "yes" || s == "will-replicate") return Side::yes;
  if (s == "no" || s == "will-not-replicate") return Side::no;
  return std::nullopt;
}

inline std::optional<Action> parse_action(std::string_view s) noexcept {
  if (s == "buy") return Action::buy;
  if (s == "sell") return Action::sell;
  return std::nullopt;
}

inline std::optional<Outcome> parse_outcome(std::string_view s) noexcept {
  if (s == "R" || s == "r" || s == "1") return Outcome::replicated;
  if (s == "NR" || s == "nr" || s == "0") return Outcome::not_replicated;
  return std::nullopt;
}

inline std::optional<Domain> parse_domain(std::string_view s) noexcept {
  for (Domain d : kAllDomains) {
    if (s == to_string(d)) return d;
  }
  // Aliases seen in source tables.
  if (s == "econ") return Domain::economics;
  if (s == "marketing/org-behavior" || s == "org-behavior")
    return Domain::marketing;
  if (s == "political_science" || s == "political-sci" || s == "polisci")
    return Domain::political_science;
  if (s == "public_administration") return Domain::public_administration;
  return std::nullopt;
}

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string format_money(double dollars) { return format_fixed(dollars, 4); }
inline std::string format_price(double p) { return format_fixed(p, 3); }

// SplitMix64 finalizer, used to derive independent stream seeds.
inline constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t hash_string(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace replimarket
