#pragma once

#include <cstdint>
#include <vector>

#include "ncodec/codec_net.hpp"
#include "ncodec/rvq.hpp"

namespace ncodec {

class CodecModel;

constexpr size_t kHeaderSize = 32;
constexpr uint16_t kBitstreamVersion = 1;

// Fixed 32-byte little-endian header:
//   0 "ADC1" | 4 u16 version | 6 u16 header size | 8 u32 sample rate |
//   12 u32 hop | 16 u8 books | 17 u8 bits per code | 18 u8 variant id |
//   19 u8 flags | 20 u64 config hash | 28 u32 reserved (zero)
struct BitstreamHeader {
    uint16_t version = kBitstreamVersion;
    uint32_t sample_rate = 48000;
    uint32_t hop = 300;
    uint8_t num_books = 8;
    uint8_t bits_per_code = 10;
    VariantId variant = VariantId::sym;
    uint8_t flags = 0;
    uint64_t config_hash = 0;

    size_t frame_bytes() const { return (size_t(num_books) * bits_per_code + 7) / 8; }
    bool operator==(const BitstreamHeader&) const = default;
};

// ceil(log2(book_size)), at least 1.
int bits_for_book_size(int64_t book_size);
// sample_rate * num_books * bits_per_code / hop, in integer arithmetic
// (rounded down when the frame rate is fractional).
uint64_t bitrate(const BitstreamHeader& h);

BitstreamHeader header_for(const CodecModel& model, uint64_t config_hash);

std::vector<uint8_t> pack_header(const BitstreamHeader& h);
// Throws Error(corrupt) on bad magic or short input, Error(compatibility)
// on an unknown version.
BitstreamHeader parse_header(const uint8_t* data, size_t size);

// Appends packed frames: indices MSB-first, books in order, each frame
// padded to whole bytes. Throws Error(shape) on an index that does not fit.
void append_frames(std::vector<uint8_t>& out, const std::vector<CodeFrame>& frames, const BitstreamHeader& h);
std::vector<uint8_t> pack_frames(const std::vector<CodeFrame>& frames, const BitstreamHeader& h);

struct Bitstream {
    BitstreamHeader header;
    std::vector<CodeFrame> frames;
};

// Exact inverse of pack_frames. A trailing partial frame raises
// Error(corrupt) naming its byte offset.
Bitstream unpack_frames(const uint8_t* data, size_t size);
inline Bitstream unpack_frames(const std::vector<uint8_t>& bytes) { return unpack_frames(bytes.data(), bytes.size()); }

// Incremental parser for piped input: feed bytes as they arrive, take whole
// frames out.
class BitstreamReader {
public:
    void feed(const uint8_t* data, size_t size);
    bool has_header() const { return have_header_; }
    const BitstreamHeader& header() const { return header_; }
    std::vector<CodeFrame> take_frames();
    // Throws Error(corrupt) if bytes of a partial frame (or header) remain.
    void finish() const;

private:
    std::vector<uint8_t> buf_;
    size_t consumed_ = 0;  // bytes of the stream already parsed
    bool have_header_ = false;
    BitstreamHeader header_;
};

}  // namespace ncodec
