#include "ncodec/stream.hpp"

#include "ncodec/error.hpp"

namespace ncodec {

std::vector<CodeFrame> StreamEncoder::run(const float* samples, int64_t frames) {
    const int64_t hop = model_->hop();
    Tensor x({1, 1, frames * hop});
    std::copy_n(samples, frames * hop, x.data());
    ag::NoGradGuard ng;
    ctx_.begin_pass();
    ag::Var z = model_->latents(ag::constant(std::move(x)), &ctx_);
    return rvq_quantize(LatentSequence::from_tensor(z->value, 0, model_->frame_rate()), model_->codebook()).codes;
}

std::vector<CodeFrame> StreamEncoder::push(const float* samples, size_t n) {
    const size_t hop = static_cast<size_t>(model_->hop());
    std::vector<CodeFrame> out;
    if (remainder_.empty() && n >= hop) {
        // Fast path: consume whole hops straight from the caller's buffer.
        const size_t whole = n / hop * hop;
        out = run(samples, static_cast<int64_t>(whole / hop));
        remainder_.assign(samples + whole, samples + n);
        return out;
    }
    remainder_.insert(remainder_.end(), samples, samples + n);
    const size_t whole = remainder_.size() / hop * hop;
    if (whole == 0) return out;
    out = run(remainder_.data(), static_cast<int64_t>(whole / hop));
    remainder_.erase(remainder_.begin(), remainder_.begin() + whole);
    return out;
}

std::vector<CodeFrame> StreamEncoder::flush() {
    std::vector<CodeFrame> out;
    if (!remainder_.empty()) {
        remainder_.resize(model_->hop(), 0.0f);
        out = run(remainder_.data(), 1);
    }
    reset();
    return out;
}

void StreamEncoder::reset() {
    ctx_.reset();
    remainder_.clear();
}

std::vector<float> StreamDecoder::push(const std::vector<CodeFrame>& frames) {
    if (frames.empty()) return {};
    ag::NoGradGuard ng;
    const LatentSequence q = rvq_dequantize(frames, model_->codebook(), model_->frame_rate());
    ctx_.begin_pass();
    ag::Var y = model_->synthesize(ag::constant(q.to_tensor()), &ctx_);
    return y->value.storage();
}

std::vector<CodeFrame> stream_encode_chunk(StreamEncoder& state, const std::vector<float>& chunk) {
    return state.push(chunk);
}

std::vector<float> stream_decode_chunk(StreamDecoder& state, const std::vector<CodeFrame>& frames) {
    return state.push(frames);
}

}  // namespace ncodec
