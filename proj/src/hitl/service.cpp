#include "lsbpan/hitl/service.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "httplib.h"
#include "json.hpp"
#include "lsbpan/annotations/dataset_io.hpp"
#include "lsbpan/error.hpp"

namespace lsbpan::hitl {

using json = nlohmann::json;

Stretch parse_stretch(std::string_view s) {
  if (s == "arcsinh") return Stretch::arcsinh;
  if (s == "linear") return Stretch::linear;
  fail(ErrorKind::data, "unknown stretch '" + std::string(s) + "'");
}

std::vector<std::uint8_t> render_channel(const imaging::LsbImage& image, int channel, Stretch stretch, double a,
                                         double b) {
  if (channel < 0 || channel >= image.channels)
    fail(ErrorKind::data, "channel " + std::to_string(channel) + " out of range");
  if (!std::isfinite(a) || !std::isfinite(b)) fail(ErrorKind::data, "stretch parameters must be finite");
  const auto plane = image.plane(channel);
  std::vector<double> v(plane.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double z = a * plane[i] + b;
    v[i] = stretch == Stretch::arcsinh ? std::asinh(z) : z;
  }
  std::vector<std::uint8_t> out(v.size(), 0);
  if (v.empty()) return out;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double range = *hi - *lo;
  if (range <= 0) return out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround(255.0 * (v[i] - *lo) / range));
  return out;
}

namespace {

void png_append(png_structp png, png_bytep data, png_size_t length) {
  auto* buf = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  buf->insert(buf->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

}  // namespace

std::vector<std::uint8_t> encode_png_gray(const std::vector<std::uint8_t>& pixels, int height, int width) {
  if (height <= 0 || width <= 0 || pixels.size() != static_cast<std::size_t>(height) * width)
    fail(ErrorKind::data, "encode_png_gray: pixel buffer does not match the size");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(ErrorKind::data, "png: cannot create writer");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    fail(ErrorKind::data, "png: encoding failed");
  }
  png_set_write_fn(png, &out, png_append, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(y) * width));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

namespace {

HttpResponse json_response(const json& j, int status = 200) { return {status, "application/json", j.dump()}; }

HttpResponse error_response(const Error& e) {
  int status = 500;
  switch (e.kind()) {
    case ErrorKind::not_found: status = 404; break;
    case ErrorKind::conflict: status = 409; break;
    case ErrorKind::config:
    case ErrorKind::data: status = 400; break;
    case ErrorKind::numeric: status = 500; break;
  }
  return json_response({{"error", e.what()}}, status);
}

template <typename F>
HttpResponse guarded(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    return error_response(e);
  }
}

std::string param(const ReviewService::Params& p, const std::string& key, const std::string& fallback) {
  const auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

double number_param(const ReviewService::Params& p, const std::string& key, double fallback) {
  const auto it = p.find(key);
  if (it == p.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::data, "query parameter " + key + " is not a number");
  }
}

int int_param(const ReviewService::Params& p, const std::string& key, int fallback, int lo) {
  const double v = number_param(p, key, fallback);
  if (v != std::floor(v) || v < lo || v > 1e9) fail(ErrorKind::data, "query parameter " + key + " is out of range");
  return static_cast<int>(v);
}

bool safe_id(const std::string& id) {
  return !id.empty() && id.find('/') == std::string::npos && id.find("..") == std::string::npos;
}

}  // namespace

HttpResponse ReviewService::queue(const Params& params) const {
  return guarded([&] {
    const int round = int_param(params, "round", store_.round(), 0);
    const int offset = int_param(params, "offset", 0, 0);
    const int limit = int_param(params, "limit", 50, 1);
    const auto items = store_.queue(round, true);
    json list = json::array();
    for (std::size_t i = static_cast<std::size_t>(offset); i < items.size() && list.size() < static_cast<std::size_t>(limit);
         ++i)
      list.push_back(to_json(items[i], false));
    return json_response({{"round", round}, {"total", items.size()}, {"offset", offset}, {"limit", limit},
                          {"items", list}});
  });
}

HttpResponse ReviewService::sample_image(const std::string& sample_id, const Params& params) const {
  return guarded([&] {
    if (!safe_id(sample_id)) fail(ErrorKind::not_found, "unknown sample " + sample_id);
    const auto path = store_.dataset_dir(store_.current_version()) / "images" / (sample_id + ".lsb");
    if (!std::filesystem::exists(path)) fail(ErrorKind::not_found, "unknown sample " + sample_id);
    const auto image = imaging::read_lsb(path);
    const Stretch stretch = parse_stretch(param(params, "stretch", "arcsinh"));
    const auto pixels = render_channel(image, int_param(params, "channel", 0, 0), stretch,
                                       number_param(params, "a", 1.0), number_param(params, "b", 0.0));
    const auto png = encode_png_gray(pixels, image.height, image.width);
    return HttpResponse{200, "image/png", std::string(png.begin(), png.end())};
  });
}

HttpResponse ReviewService::item_mask(const std::string& item_id) const {
  return guarded([&] {
    const auto it = store_.item(item_id);
    if (!it) fail(ErrorKind::not_found, "unknown review item " + item_id);
    return json_response({{"id", it->id},
                          {"sample_id", it->sample_id},
                          {"height", it->mask.height},
                          {"width", it->mask.width},
                          {"bbox", annotations::bbox_to_json(it->bbox)},
                          {"rle", annotations::runs_to_json(it->mask)}});
  });
}

HttpResponse ReviewService::decide(const std::string& item_id, const std::string& body) {
  return guarded([&] {
    json j;
    try {
      j = json::parse(body);
    } catch (const json::exception&) {
      fail(ErrorKind::data, "decision body is not JSON");
    }
    if (!j.is_object() || !j.contains("status") || !j["status"].is_string())
      fail(ErrorKind::data, "decision body needs a string status");
    const ReviewStatus status = parse_review_status(j["status"].get<std::string>());
    if (status == ReviewStatus::pending) fail(ErrorKind::data, "status must be accepted or rejected");
    const auto result = store_.decide(item_id, status);
    return json_response({{"item", to_json(result.item, false)}, {"changed", result.changed}});
  });
}

HttpResponse ReviewService::progress() const {
  return guarded([&] { return json_response(store_.progress()); });
}

ReviewServer::ReviewServer(HitlStore& store) : service_(store), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

ReviewServer::~ReviewServer() { stop(); }

void ReviewServer::install_routes() {
  auto send = [](httplib::Response& res, const HttpResponse& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  auto params_of = [](const httplib::Request& req) {
    ReviewService::Params p;
    for (const auto& [k, v] : req.params) p[k] = v;
    return p;
  };
  server_->Get("/api/queue", [=, this](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.queue(params_of(req)));
  });
  server_->Get(R"(/api/samples/([^/]+)/image)", [=, this](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.sample_image(req.matches[1], params_of(req)));
  });
  server_->Get(R"(/api/items/([^/]+)/mask)", [=, this](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.item_mask(req.matches[1]));
  });
  server_->Post(R"(/api/items/([^/]+)/decision)", [=, this](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.decide(req.matches[1], req.body));
  });
  server_->Get("/api/progress", [=, this](const httplib::Request&, httplib::Response& res) {
    send(res, service_.progress());
  });
}

int ReviewServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) fail(ErrorKind::config, "cannot bind review server to " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void ReviewServer::listen(const std::string& host, int port) {
  if (!server_->listen(host, port))
    fail(ErrorKind::config, "cannot serve on " + host + ":" + std::to_string(port));
}

void ReviewServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace lsbpan::hitl
