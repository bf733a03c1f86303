#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace duohash {

/// Namespaces keep labels from different item families from colliding.
enum class LabelSpace : std::uint8_t {
  primary = 0,    // one label per primary (copy-detection) image
  nontarget = 1,  // one label per non-target face image
  target = 2,     // one shared label per target individual
};

/// Training label: the namespace in the top byte, an index below it.
class Label {
 public:
  constexpr Label() = default;
  constexpr Label(LabelSpace space, std::uint64_t index)
      : value_((static_cast<std::uint64_t>(space) << 56) | (index & kIndexMask)) {}

  constexpr LabelSpace space() const { return static_cast<LabelSpace>(value_ >> 56); }
  constexpr std::uint64_t index() const { return value_ & kIndexMask; }
  constexpr std::uint64_t raw() const { return value_; }

  friend constexpr auto operator<=>(const Label&, const Label&) = default;

 private:
  static constexpr std::uint64_t kIndexMask = (std::uint64_t{1} << 56) - 1;
  std::uint64_t value_ = 0;
};

inline std::string to_string(Label label) {
  static constexpr const char* kNames[] = {"primary", "nontarget", "target"};
  const auto space = static_cast<unsigned>(label.space());
  return std::string(space < 3 ? kNames[space] : "unknown") + ":" + std::to_string(label.index());
}

}  // namespace duohash
