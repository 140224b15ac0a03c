#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "../tools/commands.hpp"
#include "ncodec/bitstream.hpp"
#include "ncodec/config.hpp"
#include "ncodec/corpus.hpp"
#include "ncodec/error.hpp"
#include "ncodec/evalkit.hpp"
#include "ncodec/model.hpp"
#include "ncodec/stream.hpp"

namespace py = pybind11;
using namespace ncodec;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using CodeArray = py::array_t<uint32_t, py::array::c_style | py::array::forcecast>;

const char* kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::io: return "io";
        case ErrorKind::format: return "format";
        case ErrorKind::config: return "config";
        case ErrorKind::prerequisite: return "prerequisite";
        case ErrorKind::compatibility: return "compatibility";
        case ErrorKind::corrupt: return "corrupt";
        case ErrorKind::shape: return "shape";
        case ErrorKind::state: return "state";
    }
    return "unknown";
}

std::vector<float> to_vector(const FloatArray& a) {
    if (a.ndim() != 1) throw Error(ErrorKind::shape, "expected a 1-D float array of samples");
    return std::vector<float>(a.data(), a.data() + a.size());
}

py::array_t<float> to_array(const std::vector<float>& v) {
    py::array_t<float> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

// [frames, books] uint32.
py::array_t<uint32_t> codes_to_array(const std::vector<CodeFrame>& codes, int books) {
    py::array_t<uint32_t> out({static_cast<py::ssize_t>(codes.size()), static_cast<py::ssize_t>(books)});
    auto m = out.mutable_unchecked<2>();
    for (size_t f = 0; f < codes.size(); ++f)
        for (int b = 0; b < books; ++b) m(f, b) = codes[f].indices[b];
    return out;
}

std::vector<CodeFrame> codes_from_array(const CodeArray& a, int books) {
    if (a.ndim() != 2 || a.shape(1) != books)
        throw Error(ErrorKind::shape, "expected codes of shape [frames, " + std::to_string(books) + "]");
    auto m = a.unchecked<2>();
    std::vector<CodeFrame> out(a.shape(0));
    for (py::ssize_t f = 0; f < a.shape(0); ++f) {
        out[f].indices.resize(books);
        for (int b = 0; b < books; ++b) out[f].indices[b] = m(f, b);
    }
    return out;
}

Waveform wave_of(const FloatArray& a, int rate) { return Waveform{to_vector(a), rate}; }

struct Codec {
    std::shared_ptr<CodecModel> model;
    CheckpointInfo info;

    int books() const { return model->codebook().num_books(); }
};

struct PyStreamEncoder {
    std::shared_ptr<CodecModel> model;
    StreamEncoder enc;
    explicit PyStreamEncoder(const Codec& c) : model(c.model), enc(*c.model) {}
};

struct PyStreamDecoder {
    std::shared_ptr<CodecModel> model;
    StreamDecoder dec;
    explicit PyStreamDecoder(const Codec& c) : model(c.model), dec(*c.model) {}
};

py::dict header_dict(const BitstreamHeader& h) {
    py::dict d;
    d["version"] = h.version;
    d["sample_rate"] = h.sample_rate;
    d["hop"] = h.hop;
    d["num_books"] = h.num_books;
    d["bits_per_code"] = h.bits_per_code;
    d["variant"] = to_string(h.variant);
    d["config_hash"] = hash_hex(h.config_hash);
    d["bitrate"] = bitrate(h);
    return d;
}

}  // namespace

PYBIND11_MODULE(_ncodec, m) {
    m.doc() = "Streamable neural audio codec";

    static py::exception<Error> error(m, "Error");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::handle(error.ptr())(e.what());
            exc.attr("kind") = kind_name(e.kind());
            PyErr_SetObject(error.ptr(), exc.ptr());
        }
    });

    py::class_<Codec>(m, "Codec")
        .def_property_readonly("sample_rate", [](const Codec& c) { return c.model->sample_rate(); })
        .def_property_readonly("hop", [](const Codec& c) { return c.model->hop(); })
        .def_property_readonly("num_books", &Codec::books)
        .def_property_readonly("book_size", [](const Codec& c) { return c.model->codebook().book_size(); })
        .def_property_readonly("variant", [](const Codec& c) { return to_string(c.model->spec().decoder.variant); })
        .def_property_readonly("stage", [](const Codec& c) { return c.info.stage; })
        .def_property_readonly("config_hash", [](const Codec& c) { return hash_hex(c.info.config_hash); })
        .def(
            "encode",
            [](const Codec& c, const FloatArray& samples) {
                const Waveform w = wave_of(samples, c.model->sample_rate());
                std::vector<CodeFrame> codes;
                {
                    py::gil_scoped_release release;
                    codes = c.model->encode_codes(w);
                }
                return codes_to_array(codes, c.books());
            },
            py::arg("samples"), "Samples at the model rate -> codes [frames, books]")
        .def(
            "decode",
            [](const Codec& c, const CodeArray& codes) {
                const auto frames = codes_from_array(codes, c.books());
                Waveform w;
                {
                    py::gil_scoped_release release;
                    w = c.model->decode(frames);
                }
                return to_array(w.samples);
            },
            py::arg("codes"))
        .def(
            "reconstruct",
            [](const Codec& c, const FloatArray& samples) {
                const Waveform w = wave_of(samples, c.model->sample_rate());
                Waveform y;
                {
                    py::gil_scoped_release release;
                    y = c.model->reconstruct(w);
                }
                return to_array(y.samples);
            },
            py::arg("samples"))
        .def(
            "pack",
            [](const Codec& c, const CodeArray& codes) {
                const auto bytes = pack_frames(codes_from_array(codes, c.books()), header_for(*c.model, c.info.config_hash));
                return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
            },
            py::arg("codes"), "Codes -> bitstream bytes (header plus frames)");

    m.def(
        "load_codec",
        [](const std::string& path) {
            Codec c;
            c.model = std::shared_ptr<CodecModel>(load_codec(path, &c.info));
            return c;
        },
        py::arg("path"));

    m.def(
        "seeded_codec",
        [](const std::string& config_path, uint64_t seed) {
            const ExperimentConfig cfg = load_config(config_path);
            Codec c;
            c.model = std::make_shared<CodecModel>(cfg.codec_spec(), seed);
            c.info.stage = "init";
            c.info.config_hash = config_hash(cfg);
            return c;
        },
        py::arg("config"), py::arg("seed") = 1, "Untrained codec built from a config file");

    py::class_<PyStreamEncoder>(m, "StreamEncoder")
        .def(py::init<const Codec&>(), py::arg("codec"))
        .def(
            "push",
            [](PyStreamEncoder& s, const FloatArray& chunk) {
                const auto v = to_vector(chunk);
                return codes_to_array(s.enc.push(v), s.model->codebook().num_books());
            },
            py::arg("chunk"))
        .def("flush",
             [](PyStreamEncoder& s) { return codes_to_array(s.enc.flush(), s.model->codebook().num_books()); })
        .def("reset", [](PyStreamEncoder& s) { s.enc.reset(); })
        .def_property_readonly("pending", [](const PyStreamEncoder& s) { return s.enc.pending(); });

    py::class_<PyStreamDecoder>(m, "StreamDecoder")
        .def(py::init<const Codec&>(), py::arg("codec"))
        .def(
            "push",
            [](PyStreamDecoder& s, const CodeArray& codes) {
                return to_array(s.dec.push(codes_from_array(codes, s.model->codebook().num_books())));
            },
            py::arg("codes"))
        .def("reset", [](PyStreamDecoder& s) { s.dec.reset(); });

    m.def(
        "unpack",
        [](const py::bytes& data) {
            const std::string s = data;
            const Bitstream b = unpack_frames(reinterpret_cast<const uint8_t*>(s.data()), s.size());
            return py::make_tuple(header_dict(b.header), codes_to_array(b.frames, b.header.num_books));
        },
        py::arg("data"), "Bitstream bytes -> (header dict, codes [frames, books])");

    m.def(
        "mcd",
        [](const FloatArray& ref, const FloatArray& test, int rate) {
            return mcd(wave_of(ref, rate), wave_of(test, rate));
        },
        py::arg("ref"), py::arg("test"), py::arg("sample_rate"));
    m.def(
        "lsd",
        [](const FloatArray& ref, const FloatArray& test, int rate) {
            return lsd(wave_of(ref, rate), wave_of(test, rate));
        },
        py::arg("ref"), py::arg("test"), py::arg("sample_rate"));
    m.def(
        "f0_metrics",
        [](const FloatArray& ref, const FloatArray& test, int rate) {
            const F0Metrics f = f0_metrics(wave_of(ref, rate), wave_of(test, rate));
            py::dict d;
            d["f0_rmse"] = f.f0_rmse;
            d["uv_error"] = f.uv_error;
            d["voiced_both"] = f.voiced_both;
            d["frames"] = f.frames;
            return d;
        },
        py::arg("ref"), py::arg("test"), py::arg("sample_rate"));

    m.def(
        "synth_speech",
        [](double seconds, int rate, uint64_t seed) {
            std::mt19937_64 rng(seed);
            return to_array(synth_speech(rng, seconds, rate).samples);
        },
        py::arg("seconds"), py::arg("sample_rate"), py::arg("seed") = 0, "Synthetic voiced test signal");

    m.def(
        "load_config",
        [](const std::string& path) {
            const ExperimentConfig cfg = load_config(path);
            return py::module_::import("json").attr("loads")(to_json(cfg).dump());
        },
        py::arg("path"), "Validated config with defaults filled in, as a dict");
    m.def(
        "config_hash", [](const std::string& path) { return hash_hex(config_hash(load_config(path))); },
        py::arg("path"));

    m.def(
        "cli",
        [](std::vector<std::string> args) {
            args.insert(args.begin(), "ncodec");
            std::vector<char*> argv;
            for (auto& a : args) argv.push_back(a.data());
            py::gil_scoped_release release;
            return cli::run(int(argv.size()), argv.data());
        },
        py::arg("args"), "Runs a command-line invocation and returns its exit code");
}
