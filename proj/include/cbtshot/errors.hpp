#pragma once

#include <stdexcept>
#include <string>

namespace cbtshot {

// Base class for every error raised by this library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// graph_core ingestion / shape errors
class NonSquare : public Error { public: using Error::Error; };
class AsymmetryTooLarge : public Error { public: using Error::Error; };
class NegativeEntry : public Error { public: using Error::Error; };
class NonFiniteEntry : public Error { public: using Error::Error; };
class DimensionMismatch : public Error { public: using Error::Error; };
class InvalidPermutation : public Error { public: using Error::Error; };
class EmptyPopulation : public Error { public: using Error::Error; };

// training errors
class NonConvergence : public Error { public: using Error::Error; };
class EmptyBatch : public Error { public: using Error::Error; };
class EmptyTrainingSet : public Error { public: using Error::Error; };
class InconsistentTrajectoryLength : public Error { public: using Error::Error; };
class MissingClass : public Error { public: using Error::Error; };

// harness errors
class TooFewSamples : public Error { public: using Error::Error; };
class InvalidSpec : public Error { public: using Error::Error; };

// io errors
class SchemaError : public Error { public: using Error::Error; };
class FileMissing : public Error { public: using Error::Error; };
class MatrixInvalid : public Error { public: using Error::Error; };
class InconsistentR : public Error { public: using Error::Error; };

}  // namespace cbtshot
