#pragma once

#include <vector>

#include "ncodec/model.hpp"

namespace ncodec {

// Chunked encoder session. Holds per-layer causal history plus the samples
// of a partial hop; emitted frames equal those of a batch encode of the
// concatenated input.
class StreamEncoder {
public:
    explicit StreamEncoder(const CodecModel& model) : model_(&model) {}

    // Appends samples and returns the frames completed by them.
    std::vector<CodeFrame> push(const float* samples, size_t n);
    std::vector<CodeFrame> push(const std::vector<float>& samples) { return push(samples.data(), samples.size()); }
    // Zero-pads a pending partial hop into one last frame (as batch encoding
    // pads the tail). The session is reset afterwards.
    std::vector<CodeFrame> flush();
    void reset();

    size_t pending() const { return remainder_.size(); }
    const CodecModel& model() const { return *model_; }

private:
    std::vector<CodeFrame> run(const float* samples, int64_t frames);

    const CodecModel* model_;
    StreamContext ctx_;
    std::vector<float> remainder_;
};

// Chunked decoder session; output samples equal a batch decode of the
// concatenated frames.
class StreamDecoder {
public:
    explicit StreamDecoder(const CodecModel& model) : model_(&model) {}

    // frames.size() * hop samples.
    std::vector<float> push(const std::vector<CodeFrame>& frames);
    void reset() { ctx_.reset(); }
    const CodecModel& model() const { return *model_; }

private:
    const CodecModel* model_;
    StreamContext ctx_;
};

std::vector<CodeFrame> stream_encode_chunk(StreamEncoder& state, const std::vector<float>& chunk);
std::vector<float> stream_decode_chunk(StreamDecoder& state, const std::vector<CodeFrame>& frames);

}  // namespace ncodec
