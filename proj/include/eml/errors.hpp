#ifndef EML_ERRORS_HPP
#define EML_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace eml {

// Base class for every failure this library reports. Subtypes name the
// violated contract; messages carry the offending values.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define EML_DEFINE_ERROR(NAME, PREFIX)                                        \
    struct NAME : Error {                                                     \
        explicit NAME(const std::string& msg) : Error(PREFIX ": " + msg) {}   \
    }

EML_DEFINE_ERROR(ShapeMismatch, "shape mismatch");
EML_DEFINE_ERROR(ZeroMass, "zero mass");
EML_DEFINE_ERROR(DegenerateInput, "degenerate input");
EML_DEFINE_ERROR(EmptyFixations, "empty fixations");
EML_DEFINE_ERROR(AllFixated, "all pixels fixated");
EML_DEFINE_ERROR(EmptyNegativePool, "empty negative pool");
EML_DEFINE_ERROR(OddDimension, "odd dimension");
EML_DEFINE_ERROR(OutOfBounds, "out of bounds");
EML_DEFINE_ERROR(UnsupportedFormat, "unsupported format");
EML_DEFINE_ERROR(IoFailure, "i/o failure");
EML_DEFINE_ERROR(ArchitectureMismatch, "architecture mismatch");
EML_DEFINE_ERROR(EmptyDataset, "empty dataset");
EML_DEFINE_ERROR(NonFiniteGradient, "non-finite gradient");

#undef EML_DEFINE_ERROR

} // namespace eml

#endif
