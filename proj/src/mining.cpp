#include "eisnet/mining.hpp"

namespace eisnet {

std::string to_string(SelectorKind kind) {
    switch (kind) {
    case SelectorKind::Random: return "random";
    case SelectorKind::SemiHard: return "semihard";
    case SelectorKind::KHard: return "khard";
    }
    return "khard";
}

SelectorKind parse_selector_kind(std::string_view s) {
    if (s == "random") return SelectorKind::Random;
    if (s == "semihard") return SelectorKind::SemiHard;
    if (s == "khard") return SelectorKind::KHard;
    throw DomainError("selector must be one of random|semihard|khard, got " + std::string(s));
}

} // namespace eisnet
