#pragma once

#include <nlohmann/json.hpp>

#include "uavtrack/common.hpp"

namespace uavtrack::model {

struct ModelConfig {
  int preproc_size = 32;
  int patch = 8;
  int compress_ratio = 4;
  int history_frames = 3;
  int d_model = 64;
  int layers = 4;
  int heads = 4;
  int mlp_ratio = 4;
  int text_len = 16;
  int vocab_size = 0;  // filled from the prompt vocabulary
  int action_dim = 4;
  int chunk_len = 25;
  int euler_steps = 10;
  double flow_gap_floor = 0.05;  // lower bound on 1 - s when turning a clean-chunk estimate into a velocity
  int time_embed_dim = 16;
  int action_hidden = 128;
  int action_queries = 4;  // attention-pooling queries conditioning the action expert; 0 = mean pooling
  int grounding_hidden = 64;
  double lambda_pos = 2.0;
  double lambda_action = 0.1;
  double query_init_std = 0.02;

  int patches_per_side() const { return preproc_size / patch; }
  int n_cur() const { return patches_per_side() * patches_per_side(); }
  int n_hist() const { return n_cur() / compress_ratio; }
  int n_visual() const { return n_cur() + history_frames * n_hist(); }
  /// Visual tokens if every frame kept all of its patches.
  int n_visual_uncompressed() const { return n_cur() * (history_frames + 1); }
  int n_tokens() const { return n_visual() + text_len; }
  int patch_dim() const { return patch * patch; }
  int action_size() const { return chunk_len * action_dim; }
  int head_dim() const { return d_model / heads; }
  int action_context() const { return (action_queries > 0 ? action_queries : 1) * d_model; }
  int action_input() const { return action_context() + 4 + action_size() + time_embed_dim; }

  /// Full-scale token layout: 256 patches per frame, 64 per history frame.
  static ModelConfig full_scale() {
    ModelConfig c;
    c.preproc_size = 128;
    c.patch = 8;
    return c;
  }

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw Error("ModelConfig: " + what);
    };
    need(preproc_size > 0 && patch > 0 && preproc_size % patch == 0, "preproc_size must be a multiple of patch");
    need(compress_ratio > 0 && n_cur() % compress_ratio == 0, "n_cur must be divisible by compress_ratio");
    need(history_frames >= 0, "history_frames must be >= 0");
    need(d_model > 0 && heads > 0 && d_model % heads == 0, "d_model must be divisible by heads");
    need(layers >= 1, "layers must be >= 1");
    need(mlp_ratio >= 1, "mlp_ratio must be >= 1");
    need(text_len >= 1, "text_len must be >= 1");
    need(vocab_size >= 2, "vocab_size must be >= 2");
    need(action_dim == 4, "action_dim must be 4");
    need(chunk_len >= 1, "chunk_len must be >= 1");
    need(euler_steps >= 1, "euler_steps must be >= 1");
    need(flow_gap_floor > 0 && flow_gap_floor <= 1, "flow_gap_floor must be in (0, 1]");
    need(time_embed_dim >= 2 && time_embed_dim % 2 == 0, "time_embed_dim must be even");
    need(action_hidden >= 1 && grounding_hidden >= 1, "hidden sizes must be positive");
    need(action_queries >= 0, "action_queries must be >= 0");
    need(lambda_pos >= 0, "lambda_pos must be >= 0");
    need(lambda_action >= 0, "lambda_action must be >= 0");
    need(query_init_std >= 0, "query_init_std must be >= 0");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ModelConfig, preproc_size, patch, compress_ratio, history_frames,
                                                d_model, layers, heads, mlp_ratio, text_len, vocab_size, action_dim,
                                                chunk_len, euler_steps, flow_gap_floor, time_embed_dim, action_hidden, action_queries,
                                                grounding_hidden, lambda_pos, lambda_action, query_init_std)

}  // namespace uavtrack::model
