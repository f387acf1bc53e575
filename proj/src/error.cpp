#include "hetlab/error.hpp"

namespace hetlab {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::BadInput: return "bad-input";
        case ErrorCode::NotFound: return "not-found";
        case ErrorCode::UnsupportedArchitecture: return "unsupported-architecture";
        case ErrorCode::Numeric: return "numeric";
        case ErrorCode::Internal: return "internal";
    }
    return "internal";
}

}  // namespace hetlab
