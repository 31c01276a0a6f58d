#ifndef DCOT_ERROR_HPP
#define DCOT_ERROR_HPP

#include <stdexcept>
#include <string>

namespace dcot {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error { public: using Error::Error; };
class NumericError : public Error { public: using Error::Error; };
class CapacityError : public Error { public: using Error::Error; };
class IndexError : public Error { public: using Error::Error; };
class DomainError : public Error { public: using Error::Error; };
class ShapeError : public Error { public: using Error::Error; };
class IntegrityError : public Error { public: using Error::Error; };
class ParseError : public Error { public: using Error::Error; };
class NoAnswerError : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };

/// Thrown when the token budget is exhausted; carries no partial state.
class BudgetStop : public Error { public: using Error::Error; };

/// Thrown when the step cap is reached.
class SessionStop : public Error { public: using Error::Error; };

} // namespace dcot

#endif
