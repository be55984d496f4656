#include "eisnet/model.hpp"

namespace eisnet {

std::string to_string(EncoderKind kind) {
    return kind == EncoderKind::Conv ? "conv" : "mlp";
}

EncoderKind parse_encoder_kind(std::string_view s) {
    if (s == "conv") return EncoderKind::Conv;
    if (s == "mlp") return EncoderKind::Mlp;
    throw DomainError("encoder must be conv or mlp, got " + std::string(s));
}

void ModelConfig::validate() const {
    if (image_side == 0 || image_side % 3 != 0)
        throw DomainError("image_side must be a positive multiple of 3, got " + std::to_string(image_side));
    if (channels == 0 || num_classes == 0 || feature_dim == 0 || embed_dim == 0)
        throw DomainError("model dimensions must be positive");
    if (aux_classes != 31) throw DomainError("aux_classes must be 31");
    if (encoder == EncoderKind::Conv) {
        // conv(3x3) -> pool2 -> conv(3x3) -> pool2 needs even sides before each pool.
        const bool ok = image_side >= 10 && (image_side - 2) % 2 == 0 && ((image_side - 2) / 2) >= 4 &&
                        ((image_side - 2) / 2 - 2) % 2 == 0;
        if (!ok)
            throw DomainError("conv encoder needs image_side with (side-2)/2-2 even and positive (e.g. 18, 30, 42); got " +
                              std::to_string(image_side));
        if (conv1_filters == 0 || conv2_filters == 0) throw DomainError("conv filter counts must be positive");
    } else if (mlp_hidden == 0) {
        throw DomainError("mlp_hidden must be positive");
    }
}

std::size_t ModelConfig::flat_dim() const {
    if (encoder == EncoderKind::Conv) {
        const std::size_t s = conv_output_side();
        return conv2_filters * s * s;
    }
    return channels * image_side * image_side;
}

} // namespace eisnet
