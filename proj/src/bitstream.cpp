#include "ncodec/bitstream.hpp"

#include <cstring>

#include "ncodec/error.hpp"
#include "ncodec/model.hpp"

namespace ncodec {

namespace {

constexpr uint8_t kMagic[4] = {'A', 'D', 'C', '1'};

template <typename T>
void put_le(uint8_t* p, T v) {
    for (size_t i = 0; i < sizeof(T); ++i) p[i] = static_cast<uint8_t>(uint64_t(v) >> (8 * i));
}

template <typename T>
T get_le(const uint8_t* p) {
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= uint64_t(p[i]) << (8 * i);
    return static_cast<T>(v);
}

void check_header(const BitstreamHeader& h) {
    if (h.num_books < 1 || h.bits_per_code < 1 || h.bits_per_code > 31 || h.hop < 1 || h.sample_rate < 1)
        throw Error(ErrorKind::corrupt, "bitstream header has invalid geometry");
}

CodeFrame read_frame(const uint8_t* p, const BitstreamHeader& h) {
    CodeFrame f;
    f.indices.resize(h.num_books);
    size_t bit = 0;
    for (int b = 0; b < h.num_books; ++b) {
        uint32_t v = 0;
        for (int i = 0; i < h.bits_per_code; ++i, ++bit) v = (v << 1) | ((p[bit >> 3] >> (7 - (bit & 7))) & 1u);
        f.indices[b] = v;
    }
    return f;
}

}  // namespace

int bits_for_book_size(int64_t book_size) {
    if (book_size < 1) throw Error(ErrorKind::config, "book size must be positive");
    int bits = 1;
    while ((int64_t(1) << bits) < book_size) ++bits;
    return bits;
}

uint64_t bitrate(const BitstreamHeader& h) {
    return uint64_t(h.sample_rate) * h.num_books * h.bits_per_code / h.hop;
}

BitstreamHeader header_for(const CodecModel& model, uint64_t config_hash) {
    BitstreamHeader h;
    h.sample_rate = static_cast<uint32_t>(model.sample_rate());
    h.hop = static_cast<uint32_t>(model.hop());
    h.num_books = static_cast<uint8_t>(model.codebook().num_books());
    h.bits_per_code = static_cast<uint8_t>(bits_for_book_size(model.codebook().book_size()));
    h.variant = model.spec().decoder.variant;
    h.config_hash = config_hash;
    return h;
}

std::vector<uint8_t> pack_header(const BitstreamHeader& h) {
    check_header(h);
    std::vector<uint8_t> out(kHeaderSize, 0);
    std::memcpy(out.data(), kMagic, 4);
    put_le<uint16_t>(&out[4], h.version);
    put_le<uint16_t>(&out[6], static_cast<uint16_t>(kHeaderSize));
    put_le<uint32_t>(&out[8], h.sample_rate);
    put_le<uint32_t>(&out[12], h.hop);
    out[16] = h.num_books;
    out[17] = h.bits_per_code;
    out[18] = static_cast<uint8_t>(h.variant);
    out[19] = h.flags;
    put_le<uint64_t>(&out[20], h.config_hash);
    put_le<uint32_t>(&out[28], 0);
    return out;
}

BitstreamHeader parse_header(const uint8_t* data, size_t size) {
    if (size < 4 || std::memcmp(data, kMagic, 4) != 0) throw Error(ErrorKind::corrupt, "bad bitstream magic");
    if (size < kHeaderSize)
        throw Error(ErrorKind::corrupt, "truncated bitstream header (" + std::to_string(size) + " of " +
                                            std::to_string(kHeaderSize) + " bytes)");
    BitstreamHeader h;
    h.version = get_le<uint16_t>(data + 4);
    if (h.version != kBitstreamVersion)
        throw Error(ErrorKind::compatibility, "unknown bitstream version " + std::to_string(h.version));
    if (get_le<uint16_t>(data + 6) != kHeaderSize) throw Error(ErrorKind::corrupt, "bad bitstream header size");
    h.sample_rate = get_le<uint32_t>(data + 8);
    h.hop = get_le<uint32_t>(data + 12);
    h.num_books = data[16];
    h.bits_per_code = data[17];
    if (data[18] > static_cast<uint8_t>(VariantId::v2))
        throw Error(ErrorKind::corrupt, "unknown variant id " + std::to_string(data[18]));
    h.variant = static_cast<VariantId>(data[18]);
    h.flags = data[19];
    h.config_hash = get_le<uint64_t>(data + 20);
    check_header(h);
    return h;
}

void append_frames(std::vector<uint8_t>& out, const std::vector<CodeFrame>& frames, const BitstreamHeader& h) {
    check_header(h);
    const size_t fb = h.frame_bytes();
    const uint32_t limit = uint32_t(1) << h.bits_per_code;
    size_t pos = out.size();
    out.resize(pos + frames.size() * fb, 0);
    for (size_t f = 0; f < frames.size(); ++f, pos += fb) {
        const auto& idx = frames[f].indices;
        if (idx.size() != h.num_books)
            throw Error(ErrorKind::shape, "frame " + std::to_string(f) + " has " + std::to_string(idx.size()) +
                                              " indices, header declares " + std::to_string(h.num_books));
        uint8_t* p = &out[pos];
        size_t bit = 0;
        for (uint32_t v : idx) {
            if (v >= limit)
                throw Error(ErrorKind::shape, "index " + std::to_string(v) + " does not fit in " +
                                                  std::to_string(h.bits_per_code) + " bits");
            for (int i = h.bits_per_code - 1; i >= 0; --i, ++bit)
                if ((v >> i) & 1u) p[bit >> 3] |= uint8_t(0x80u >> (bit & 7));
        }
    }
}

std::vector<uint8_t> pack_frames(const std::vector<CodeFrame>& frames, const BitstreamHeader& h) {
    auto out = pack_header(h);
    append_frames(out, frames, h);
    return out;
}

Bitstream unpack_frames(const uint8_t* data, size_t size) {
    Bitstream bs;
    bs.header = parse_header(data, size);
    const size_t fb = bs.header.frame_bytes();
    const size_t payload = size - kHeaderSize;
    if (payload % fb != 0) {
        const size_t offset = kHeaderSize + payload / fb * fb;
        throw Error(ErrorKind::corrupt, "truncated frame at byte offset " + std::to_string(offset) + " (" +
                                            std::to_string(size - offset) + " of " + std::to_string(fb) +
                                            " bytes)");
    }
    bs.frames.reserve(payload / fb);
    for (size_t p = kHeaderSize; p < size; p += fb) bs.frames.push_back(read_frame(data + p, bs.header));
    return bs;
}

void BitstreamReader::feed(const uint8_t* data, size_t size) {
    buf_.insert(buf_.end(), data, data + size);
    if (!have_header_ && buf_.size() >= kHeaderSize) {
        header_ = parse_header(buf_.data(), buf_.size());
        have_header_ = true;
        buf_.erase(buf_.begin(), buf_.begin() + kHeaderSize);
        consumed_ = kHeaderSize;
    } else if (!have_header_ && buf_.size() >= 4) {
        if (std::memcmp(buf_.data(), kMagic, 4) != 0) throw Error(ErrorKind::corrupt, "bad bitstream magic");
    }
}

std::vector<CodeFrame> BitstreamReader::take_frames() {
    std::vector<CodeFrame> out;
    if (!have_header_) return out;
    const size_t fb = header_.frame_bytes();
    const size_t n = buf_.size() / fb;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) out.push_back(read_frame(buf_.data() + i * fb, header_));
    buf_.erase(buf_.begin(), buf_.begin() + n * fb);
    consumed_ += n * fb;
    return out;
}

void BitstreamReader::finish() const {
    if (!have_header_) {
        if (buf_.empty()) throw Error(ErrorKind::corrupt, "empty bitstream");
        parse_header(buf_.data(), buf_.size());
    }
    if (!buf_.empty())
        throw Error(ErrorKind::corrupt, "truncated frame at byte offset " + std::to_string(consumed_) + " (" +
                                            std::to_string(buf_.size()) + " of " +
                                            std::to_string(header_.frame_bytes()) + " bytes)");
}

}  // namespace ncodec
