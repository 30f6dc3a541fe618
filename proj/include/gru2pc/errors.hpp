#pragma once

#include <stdexcept>
#include <string>

namespace gru2pc {

// One exception type per failure class so callers and tests can match on it.
#define GRU2PC_ERROR(Name)                                  \
  class Name : public std::runtime_error {                  \
   public:                                                  \
    explicit Name(const std::string& what)                  \
        : std::runtime_error(#Name ": " + what) {}          \
  }

GRU2PC_ERROR(RangeError);
GRU2PC_ERROR(ParamError);
GRU2PC_ERROR(NoiseExhausted);
GRU2PC_ERROR(ScaleMismatch);
GRU2PC_ERROR(DimensionError);
GRU2PC_ERROR(SpecError);
GRU2PC_ERROR(DecodeError);
GRU2PC_ERROR(ProtocolError);
GRU2PC_ERROR(RangeViolation);
GRU2PC_ERROR(FrameError);
GRU2PC_ERROR(ChannelClosed);
GRU2PC_ERROR(SchemaError);
GRU2PC_ERROR(ShapeError);

#undef GRU2PC_ERROR

}  // namespace gru2pc
