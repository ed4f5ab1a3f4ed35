/*
 * xmsynth : anatomy-aware unpaired ultrasound-to-MR synthesis
 *
 * Copyright 2026 The xmsynth Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "xmsynth/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace xmsynth::checkpoint {
namespace {

using json = nlohmann::ordered_json;

std::string dtype_name(torch::ScalarType t) {
    switch (t) {
    case torch::kFloat32: return "float32";
    case torch::kFloat64: return "float64";
    case torch::kInt64: return "int64";
    case torch::kUInt8: return "uint8";
    default: throw CheckpointError("unsupported tensor dtype in checkpoint");
    }
}

torch::ScalarType dtype_from(const std::string& s) {
    if (s == "float32") return torch::kFloat32;
    if (s == "float64") return torch::kFloat64;
    if (s == "int64") return torch::kInt64;
    if (s == "uint8") return torch::kUInt8;
    throw CheckpointError("unknown tensor dtype '" + s + "'");
}

struct Parsed {
    json header;
    std::string payload;
};

Parsed read_raw(const std::filesystem::path& path, bool with_payload) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string_view(magic, 8) != kMagic)
        throw CheckpointError(path.string() + " is not an XMSYNTH1 checkpoint");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in || len > (std::uint64_t{1} << 32)) throw CheckpointError("corrupt checkpoint header");
    std::string header(len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(len));
    if (!in) throw CheckpointError("truncated checkpoint header");
    Parsed p;
    try {
        p.header = json::parse(header);
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
    }
    if (with_payload) {
        std::ostringstream ss;
        ss << in.rdbuf();
        p.payload = ss.str();
    }
    return p;
}

}  // namespace

void write(const std::filesystem::path& path, const Archive& archive) {
    json header = archive.meta;
    header["tensors"] = json::array();
    header["blobs"] = json::array();
    std::string payload;
    for (const auto& [name, tensor] : archive.tensors) {
        const auto t = tensor.detach().to(torch::kCPU).contiguous();
        const auto nbytes = static_cast<std::size_t>(t.numel()) * t.element_size();
        header["tensors"].push_back(json{{"name", name},
                                         {"dtype", dtype_name(t.scalar_type())},
                                         {"shape", t.sizes().vec()},
                                         {"offset", payload.size()},
                                         {"nbytes", nbytes}});
        payload.append(static_cast<const char*>(t.data_ptr()), nbytes);
    }
    for (const auto& [name, blob] : archive.blobs) {
        header["blobs"].push_back(
            json{{"name", name}, {"offset", payload.size()}, {"nbytes", blob.size()}});
        payload += blob;
    }
    const std::string text = header.dump();
    const std::uint64_t len = text.size();
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
        out.write(kMagic.data(), 8);
        out.write(reinterpret_cast<const char*>(&len), sizeof(len));
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        if (!out) throw CheckpointError("short write on checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

Archive read(const std::filesystem::path& path) {
    Parsed p = read_raw(path, true);
    Archive a;
    try {
        for (const auto& t : p.header.at("tensors")) {
            const auto offset = t.at("offset").get<std::size_t>();
            const auto nbytes = t.at("nbytes").get<std::size_t>();
            if (offset + nbytes > p.payload.size()) throw CheckpointError("truncated checkpoint payload");
            auto tensor = torch::empty(t.at("shape").get<std::vector<std::int64_t>>(),
                                       torch::TensorOptions().dtype(dtype_from(t.at("dtype"))));
            if (static_cast<std::size_t>(tensor.numel()) * tensor.element_size() != nbytes)
                throw CheckpointError("tensor size mismatch in checkpoint");
            std::memcpy(tensor.data_ptr(), p.payload.data() + offset, nbytes);
            a.tensors.emplace(t.at("name").get<std::string>(), tensor);
        }
        for (const auto& b : p.header.at("blobs")) {
            const auto offset = b.at("offset").get<std::size_t>();
            const auto nbytes = b.at("nbytes").get<std::size_t>();
            if (offset + nbytes > p.payload.size()) throw CheckpointError("truncated checkpoint payload");
            a.blobs.emplace(b.at("name").get<std::string>(), p.payload.substr(offset, nbytes));
        }
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint index: ") + e.what());
    }
    p.header.erase("tensors");
    p.header.erase("blobs");
    a.meta = std::move(p.header);
    return a;
}

json read_meta(const std::filesystem::path& path) {
    auto header = read_raw(path, false).header;
    header.erase("tensors");
    header.erase("blobs");
    return header;
}

void add_module(Archive& archive, const torch::nn::Module& module, const std::string& prefix) {
    for (const auto& item : module.named_parameters(true))
        archive.tensors[prefix + item.key()] = item.value().detach().clone();
    for (const auto& item : module.named_buffers(true))
        archive.tensors[prefix + item.key()] = item.value().detach().clone();
}

void load_module(const Archive& archive, torch::nn::Module& module, const std::string& prefix) {
    torch::NoGradGuard no_grad;
    const auto assign = [&](const std::string& name, torch::Tensor& target) {
        const auto it = archive.tensors.find(prefix + name);
        if (it == archive.tensors.end()) throw CheckpointError("checkpoint lacks tensor '" + prefix + name + "'");
        if (it->second.sizes() != target.sizes())
            throw CheckpointError("shape mismatch for tensor '" + prefix + name + "'");
        target.copy_(it->second);
    };
    for (auto& item : module.named_parameters(true)) assign(item.key(), item.value());
    for (auto& item : module.named_buffers(true)) assign(item.key(), item.value());
}

std::string serialize_optimizer(const torch::optim::Optimizer& optimizer) {
    torch::serialize::OutputArchive archive;
    optimizer.save(archive);
    std::ostringstream ss;
    archive.save_to(ss);
    return ss.str();
}

void deserialize_optimizer(const std::string& blob, torch::optim::Optimizer& optimizer) {
    std::istringstream ss(blob);
    torch::serialize::InputArchive archive;
    archive.load_from(ss);
    optimizer.load(archive);
}

}  // namespace xmsynth::checkpoint
