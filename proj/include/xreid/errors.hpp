#pragma once

#include <stdexcept>
#include <string>

namespace xreid {

// All library errors carry a stable name so the CLI can report the
// originating condition verbatim and tests can match on it.
class Error : public std::runtime_error {
 public:
  Error(std::string name, const std::string& msg)
      : std::runtime_error(name + ": " + msg), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

#define XREID_DECLARE_ERROR(NAME)                    \
  struct NAME : Error {                              \
    explicit NAME(const std::string& msg)            \
        : Error(#NAME, msg) {}                       \
  }

XREID_DECLARE_ERROR(DimensionMismatch);
XREID_DECLARE_ERROR(ShapeMismatch);
XREID_DECLARE_ERROR(ZeroNormRow);
XREID_DECLARE_ERROR(NonConvergence);
XREID_DECLARE_ERROR(TooLarge);
XREID_DECLARE_ERROR(EdgeOutOfRange);
XREID_DECLARE_ERROR(LabelOutOfRange);
XREID_DECLARE_ERROR(NoValidTriplet);
XREID_DECLARE_ERROR(NonFinite);
XREID_DECLARE_ERROR(UnknownModality);
XREID_DECLARE_ERROR(DivergenceDetected);
XREID_DECLARE_ERROR(BadMagic);
XREID_DECLARE_ERROR(TruncatedFile);
XREID_DECLARE_ERROR(VersionMismatch);
XREID_DECLARE_ERROR(InsufficientSamples);
XREID_DECLARE_ERROR(InsufficientGallerySamples);
XREID_DECLARE_ERROR(EmptyGallery);
XREID_DECLARE_ERROR(NoRelevantItem);
XREID_DECLARE_ERROR(InvalidArgument);

#undef XREID_DECLARE_ERROR

}  // namespace xreid
