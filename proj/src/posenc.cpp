#include "dattn/posenc.hpp"

#include "dattn/errors.hpp"

namespace dattn {

PositionAssignment assign_positions(std::int64_t n_visual, std::int64_t n_textual,
                                    PositionMode mode) {
    if (n_visual < 0 || n_textual < 1)
        throw ConfigError("assign_positions requires n_visual >= 0 and n_textual >= 1");

    PositionAssignment pa;
    pa.mode = mode;
    pa.visual_positions.reserve(static_cast<std::size_t>(n_visual));
    for (std::int64_t i = 0; i < n_visual; ++i)
        pa.visual_positions.push_back(mode == PositionMode::kBiased ? i : 0);
    pa.textual_positions.reserve(static_cast<std::size_t>(n_textual));
    for (std::int64_t i = 0; i < n_textual; ++i)
        pa.textual_positions.push_back(n_visual + i);
    return pa;
}

} // namespace dattn
