#include "dvis/error.hpp"

namespace dvis {

void throw_validation(const std::string& what) { throw Error(ErrorKind::Validation, what); }

void throw_data(const std::string& what) { throw Error(ErrorKind::Data, what); }

void throw_numerical(const std::string& what) { throw Error(ErrorKind::Numerical, what); }

void rethrow_with_stage(const std::string& stage) {
    try {
        throw;
    } catch (const Error& e) {
        throw Error(e.kind(), stage + ": " + e.what());
    } catch (const std::exception& e) {
        throw Error(ErrorKind::Numerical, stage + ": " + e.what());
    }
}

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::Validation:
        return 2;
    case ErrorKind::Data:
        return 3;
    case ErrorKind::Numerical:
        return 4;
    }
    return 1;
}

} // namespace dvis
