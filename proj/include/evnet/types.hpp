#pragma once
// Core vocabulary shared by every evnet module: names, attribute bindings,
// event descriptions and the error type thrown by library operations.

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace evnet {

using TypeName = std::string;
using FeatureName = std::string;
using AttrName = std::string;

// Attribute constants are opaque atoms compared by string equality.
using Const = std::string;

// Partial attribute assignment, kept sorted so descriptions compare and
// print deterministically.
using Bindings = std::map<AttrName, Const>;

// A type plus a partial map of attribute values: c(x) ∧ V(x).
struct EventDescription {
  TypeName type;
  Bindings bindings;

  friend bool operator==(const EventDescription&, const EventDescription&) = default;
  friend auto operator<=>(const EventDescription&, const EventDescription&) = default;
};

// True when every binding of `sub` appears with the same value in `super`.
inline bool bindings_subset(const Bindings& sub, const Bindings& super) {
  for (const auto& [attr, value] : sub) {
    auto it = super.find(attr);
    if (it == super.end() || it->second != value) return false;
  }
  return true;
}

// True when no attribute is bound to different values in the two maps.
inline bool bindings_compatible(const Bindings& a, const Bindings& b) {
  const Bindings& small = a.size() <= b.size() ? a : b;
  const Bindings& large = a.size() <= b.size() ? b : a;
  for (const auto& [attr, value] : small) {
    auto it = large.find(attr);
    if (it != large.end() && it->second != value) return false;
  }
  return true;
}

enum class ErrorKind {
  UnknownType,
  UnknownFeature,
  NoStatistic,
  AmbiguousStatistic,
  PreemptedPath,
  DuplicateFeature,
  TypeMismatch,
  NotALeaf,
  NotADescendant,
  NotACulprit,
  UnknownNode,
  UnknownObservationType,
  InvalidArgument,
  InvalidNetwork,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnknownType: return "UnknownType";
    case ErrorKind::UnknownFeature: return "UnknownFeature";
    case ErrorKind::NoStatistic: return "NoStatistic";
    case ErrorKind::AmbiguousStatistic: return "AmbiguousStatistic";
    case ErrorKind::PreemptedPath: return "PreemptedPath";
    case ErrorKind::DuplicateFeature: return "DuplicateFeature";
    case ErrorKind::TypeMismatch: return "TypeMismatch";
    case ErrorKind::NotALeaf: return "NotALeaf";
    case ErrorKind::NotADescendant: return "NotADescendant";
    case ErrorKind::NotACulprit: return "NotACulprit";
    case ErrorKind::UnknownNode: return "UnknownNode";
    case ErrorKind::UnknownObservationType: return "UnknownObservationType";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::InvalidNetwork: return "InvalidNetwork";
  }
  return "Error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Relative comparison used wherever probabilities are compared for equality.
inline constexpr double kRelativeTolerance = 1e-12;

inline bool approx_equal(double a, double b, double rel = kRelativeTolerance) {
  if (a == b) return true;
  double scale = std::max(std::fabs(a), std::fabs(b));
  return std::fabs(a - b) <= rel * scale;
}

}  // namespace evnet
