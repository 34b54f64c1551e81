#ifndef ORIENT_GEO_ERRORS_H_
#define ORIENT_GEO_ERRORS_H_

#include <stdexcept>
#include <string>

namespace orient_geo {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ORIENT_GEO_DEFINE_ERROR(Name)      \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

ORIENT_GEO_DEFINE_ERROR(InvalidArgument);
ORIENT_GEO_DEFINE_ERROR(InvalidRotation);
ORIENT_GEO_DEFINE_ERROR(InvalidAxisAngle);
ORIENT_GEO_DEFINE_ERROR(InvalidQuaternion);
ORIENT_GEO_DEFINE_ERROR(NearPiRotation);
ORIENT_GEO_DEFINE_ERROR(GimbalLock);
ORIENT_GEO_DEFINE_ERROR(InsufficientData);
ORIENT_GEO_DEFINE_ERROR(DegenerateDictionary);
ORIENT_GEO_DEFINE_ERROR(DimensionMismatch);
ORIENT_GEO_DEFINE_ERROR(ZeroSum);
ORIENT_GEO_DEFINE_ERROR(FamilyMismatch);
ORIENT_GEO_DEFINE_ERROR(BehindCamera);
ORIENT_GEO_DEFINE_ERROR(DegenerateConfiguration);
ORIENT_GEO_DEFINE_ERROR(EmptyCategory);
ORIENT_GEO_DEFINE_ERROR(NonFiniteLoss);
ORIENT_GEO_DEFINE_ERROR(ParseError);

#undef ORIENT_GEO_DEFINE_ERROR

}  // namespace orient_geo

#endif  // ORIENT_GEO_ERRORS_H_
