#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bssd/common.hpp"
#include "bssd/localization.hpp"
#include "bssd/metrics.hpp"
#include "bssd/signal.hpp"

namespace bssd {

struct BlockConfig {
  double block_seconds = 5.0;  // T_B; blocks are non-overlapping

  std::size_t block_samples(double sample_rate) const {
    if (block_seconds <= 0.0) throw invalid_config("BlockConfig: block length must be positive");
    return static_cast<std::size_t>(std::llround(block_seconds * sample_rate));
  }
};

// floor(T / block) full blocks; a trailing remainder is zero-padded into one
// final block.
inline std::vector<MultiChannelSignal> split_blocks(const MultiChannelSignal& z,
                                                    const BlockConfig& cfg) {
  const std::size_t block = cfg.block_samples(z.sample_rate);
  const std::size_t t_len = z.frames();
  if (t_len < block) throw invalid_input("split_blocks: signal shorter than one block");

  std::vector<MultiChannelSignal> blocks;
  const std::size_t full = t_len / block;
  const bool remainder = t_len % block != 0;
  for (std::size_t b = 0; b < full + (remainder ? 1 : 0); ++b) {
    MultiChannelSignal blk(block, z.channels, z.sample_rate);
    const std::size_t start = b * block;
    const std::size_t n = std::min(block, t_len - start);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t m = 0; m < z.channels; ++m) blk.at(t, m) = z.at(start + t, m);
    blocks.push_back(std::move(blk));
  }
  return blocks;
}

// One diarized speaker: the registry embedding (first seen, never mutated)
// and the time-aligned mono stream.
struct SpeakerStream {
  Embedding registry_embedding;
  std::vector<double> stream;
  std::vector<std::optional<Embedding>> block_embeddings;  // per block, empty = silent
};

struct BlockAssignment {
  int block = 0;
  int doa_index = 0;
  int speaker = 0;  // index into DiarizedOutput::speakers
  bool new_speaker = false;
  bool dropped_duplicate = false;
  double registry_dist = 0.0;
};

struct DiarizedOutput {
  std::vector<SpeakerStream> speakers;
  std::vector<BlockAssignment> assignments;
  std::vector<std::string> diagnostics;
  std::size_t block_samples = 0;
  std::size_t block_count = 0;
  double sample_rate = kDefaultSampleRate;
};

// Block-online identity assignment: run the localization loop per block,
// then key every accepted source to the registry by embedding distance.
// New speakers (min distance > delta) open a stream padded with leading
// silence; known speakers append at the argmin index. Speakers without an
// update in a block receive a silence block, so streams stay time aligned.
// A second match of the same speaker within one block is dropped with a
// diagnostic. A failing block yields silence for all speakers.
inline DiarizedOutput diarize(const std::vector<MultiChannelSignal>& blocks, const DoaGrid& grid,
                              const WhiteningTransform& u, const Extractor& extractor,
                              const StftConfig& stft_cfg, const LocalizeParams& params) {
  if (blocks.empty()) throw invalid_input("diarize: no blocks");

  DiarizedOutput out;
  out.block_samples = blocks.front().frames();
  out.block_count = blocks.size();
  out.sample_rate = blocks.front().sample_rate;

  for (std::size_t b = 0; b < blocks.size(); ++b) {
    std::vector<bool> updated(out.speakers.size(), false);

    LocalizationOutcome outcome;
    bool block_failed = false;
    try {
      outcome = localize(blocks[b], grid, u, extractor, stft_cfg, params);
    } catch (const std::exception& ex) {
      block_failed = true;
      out.diagnostics.push_back("block " + std::to_string(b) + " failed: " + ex.what());
    }

    if (!block_failed) {
      for (const ExtractionResult* src : outcome.accepted()) {
        BlockAssignment assign;
        assign.block = static_cast<int>(b);
        assign.doa_index = src->doa_index;

        double best = std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t s = 0; s < out.speakers.size(); ++s) {
          const double d = distance(out.speakers[s].registry_embedding, src->embedding);
          if (d < best) {
            best = d;
            best_idx = s;
          }
        }
        assign.registry_dist = best;

        std::vector<double> mono = src->signal.channel(0);
        mono.resize(out.block_samples, 0.0);

        if (out.speakers.empty() || best > params.delta) {
          SpeakerStream stream;
          stream.registry_embedding = src->embedding;
          stream.stream.assign(b * out.block_samples, 0.0);  // silent history
          stream.stream.insert(stream.stream.end(), mono.begin(), mono.end());
          stream.block_embeddings.assign(b, std::nullopt);
          stream.block_embeddings.push_back(src->embedding);
          out.speakers.push_back(std::move(stream));
          updated.push_back(true);
          assign.speaker = static_cast<int>(out.speakers.size()) - 1;
          assign.new_speaker = true;
        } else if (updated[best_idx]) {
          assign.speaker = static_cast<int>(best_idx);
          assign.dropped_duplicate = true;
          out.diagnostics.push_back("block " + std::to_string(b) +
                                    ": duplicate capture of speaker " +
                                    std::to_string(best_idx) + " dropped");
        } else {
          SpeakerStream& stream = out.speakers[best_idx];
          stream.stream.insert(stream.stream.end(), mono.begin(), mono.end());
          stream.block_embeddings.push_back(src->embedding);
          updated[best_idx] = true;
          assign.speaker = static_cast<int>(best_idx);
        }
        out.assignments.push_back(assign);
      }
    }

    for (std::size_t s = 0; s < out.speakers.size(); ++s) {
      if (updated[s]) continue;
      out.speakers[s].stream.insert(out.speakers[s].stream.end(), out.block_samples, 0.0);
      out.speakers[s].block_embeddings.push_back(std::nullopt);
    }
  }
  return out;
}

}  // namespace bssd
