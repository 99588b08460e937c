#pragma once

#include <stdexcept>
#include <string>

namespace sofa {

// All engine errors carry the name of the module that raised them so the
// CLI can print "module: message" diagnostics.
class Error : public std::runtime_error {
public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

private:
  std::string module_;
};

#define SOFA_DEFINE_ERROR(Name)                                                \
  class Name : public Error {                                                  \
  public:                                                                      \
    using Error::Error;                                                        \
  }

SOFA_DEFINE_ERROR(SourceUnavailable);
SOFA_DEFINE_ERROR(FormatError);
SOFA_DEFINE_ERROR(IoError);
SOFA_DEFINE_ERROR(OutOfBounds);
SOFA_DEFINE_ERROR(DimensionMismatch);
SOFA_DEFINE_ERROR(SidecarExhausted);
SOFA_DEFINE_ERROR(RangeError);
SOFA_DEFINE_ERROR(PortUnavailable);
SOFA_DEFINE_ERROR(ValidationError);
SOFA_DEFINE_ERROR(BindError);

#undef SOFA_DEFINE_ERROR

}  // namespace sofa
