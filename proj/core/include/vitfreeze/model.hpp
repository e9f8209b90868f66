#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "vitfreeze/exec.hpp"
#include "vitfreeze/hog.hpp"

namespace vitfreeze {

struct ModelConfig {
    int64_t image_size = 64;  // square images
    int64_t channels = 3;
    int64_t patch_size = 8;
    int64_t embed_dim = 64;
    int num_blocks = 4;
    int num_heads = 4;
    double mlp_ratio = 4.0;
    std::vector<int> tap_layers = {1, 2, 3, 4};          // block indices feeding decoders
    std::vector<int64_t> supervision_scales = {16, 8, 8, 4};  // one per tap, fine to coarse
    int64_t decoder_dim = 32;
    int decoder_heads = 4;
    double mask_ratio = 0.75;
    ops::GeluMode gelu_mode = ops::GeluMode::kTanh;
    double ln_eps = 1e-6;
    HogConfig hog;

    int64_t grid_side() const { return image_size / patch_size; }
    int64_t num_patches() const { return grid_side() * grid_side(); }
    int64_t patch_dim() const { return patch_size * patch_size * channels; }
    int num_units() const { return num_blocks + 1; }  // patch embedding + blocks
    int64_t visible_count() const;                     // N - round(r*N)
    void validate() const;
};

// Raster-order patch rows: image [C,H,W] -> [N, P*P*C], each row one patch
// flattened row-major with channel fastest.  Exactly inverted by unpatchify.
Tensor patchify(const Tensor& image, int64_t patch_size);
Tensor unpatchify(const Tensor& patches, int64_t patch_size, int64_t channels, int64_t image_size);

// Fixed 2D sin-cos positional table for a grid*grid token layout, dim
// divisible by 4 (half the features encode the row, half the column).
Tensor build_sincos_pos_table(int64_t grid, int64_t dim);

struct TransformerBlockParams {
    Tensor ln1_g, ln1_b;
    Tensor w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
    Tensor ln2_g, ln2_b;
    Tensor w_fc1, b_fc1, w_fc2, b_fc2;
    void collect(std::vector<Tensor*>& out);
};

// One freeze unit: index 0 is the patch embedding, 1..num_blocks the
// transformer blocks.  Freezing is monotone and in index order.
struct FreezableLayer {
    int index = 0;
    std::string name;
    std::vector<Tensor*> params;
    bool frozen = false;
    int64_t freeze_step = -1;
};

// Reconstruction head reading one tap: projection into the decoder width,
// mask-token infill, one transformer block, rescale chain to the supervision
// scale, projection to the HOG bin dimension.
struct DecoderHead {
    int tap = 0;
    int64_t scale = 0;
    Tensor w_in, b_in;
    Tensor mask_token;
    TransformerBlockParams block;
    Tensor ln_g, ln_b;
    std::vector<Tensor> up_kernels;  // one [decoder_dim,2,2] per 2x upsample step
    int pool_steps = 0;              // 2x average-pool steps (coarse scales)
    Tensor w_out, b_out;
    bool pruned = false;
    int64_t prune_step = -1;
    void collect(std::vector<Tensor*>& out);
};

class VitMimModel {
public:
    VitMimModel(ModelConfig cfg, uint64_t seed);
    VitMimModel(const VitMimModel&) = delete;
    VitMimModel& operator=(const VitMimModel&) = delete;

    const ModelConfig& config() const { return cfg_; }

    // Runs patch embedding + blocks on visible tokens.  Layers below the
    // frozen prefix run in inference mode (no tape entries); their outputs
    // enter the recorded graph as frozen-boundary constants.  Returns the
    // activation after every tap layer <= max_block.  Forward values are
    // bitwise identical for every prefix because both lanes share kernels.
    std::map<int, Val> encoder_forward(Exec& ex, const Tensor& visible_patches,
                                       const Tensor& posemb_visible,
                                       int frozen_prefix_override = -1, int max_block = -1);

    // vis_idx/mask_idx are flattened per-batch index lists (batch * count).
    Val decoder_forward(Exec& ex, int head_index, Val tap_activation,
                        const std::vector<int64_t>& vis_idx,
                        const std::vector<int64_t>& mask_idx, int64_t batch);

    void freeze_layer(int index, int64_t step);
    // Marks the head pruned iff every encoder unit feeding it (patch embed +
    // blocks <= tap) is frozen.  Returns true the first time that happens.
    bool prune_decoder_if_dead(int head_index, int64_t step);

    int frozen_prefix() const { return frozen_prefix_; }
    int num_alive_heads() const;
    int max_alive_tap() const;  // 0 when no head is alive

    std::vector<FreezableLayer>& layers() { return layers_; }
    const std::vector<FreezableLayer>& layers() const { return layers_; }
    std::vector<DecoderHead>& heads() { return heads_; }
    const std::vector<DecoderHead>& heads() const { return heads_; }

    const Tensor& encoder_pos() const { return enc_pos_; }   // [N, D]
    const Tensor& decoder_pos() const { return dec_pos_; }   // [N, decoder_dim]
    // [batch, V, D] table rows for each visible index.
    Tensor posemb_for_visible(const std::vector<int64_t>& vis_idx, int64_t batch) const;

    // Stable name -> parameter ordering used by the optimizer, checkpointing
    // and digests.
    const std::vector<std::pair<std::string, Tensor*>>& named_params() const { return named_; }
    // Freeze-unit index owning a parameter, or -1 for decoder parameters.
    int unit_of(const Tensor* p) const;

private:
    Val block_forward(Exec& ex, TransformerBlockParams& p, Val x, int heads_count);
    Val unit_forward(Exec& ex, int unit, Val x, const Tensor& posemb_visible);

    ModelConfig cfg_;
    Tensor pe_w_, pe_b_;  // patch embedding
    std::vector<TransformerBlockParams> blocks_;
    std::vector<FreezableLayer> layers_;
    std::vector<DecoderHead> heads_;
    Tensor enc_pos_, dec_pos_;
    std::set<int> tap_set_;
    int frozen_prefix_ = 0;
    std::vector<std::pair<std::string, Tensor*>> named_;
    std::map<const Tensor*, int> unit_by_param_;
};

}  // namespace vitfreeze
