#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "lsbpan/hitl/store.hpp"
#include "lsbpan/imaging/image.hpp"

namespace httplib {
class Server;
}

namespace lsbpan::hitl {

enum class Stretch { arcsinh, linear };
Stretch parse_stretch(std::string_view s);

// One channel mapped through the stretch (arcsinh(a*x + b) or a*x + b) and
// scaled linearly from its min..max to 0..255.
std::vector<std::uint8_t> render_channel(const imaging::LsbImage& image, int channel, Stretch stretch, double a,
                                         double b);
std::vector<std::uint8_t> encode_png_gray(const std::vector<std::uint8_t>& pixels, int height, int width);

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

// Transport-independent request handlers for the review API:
//   GET  /api/queue?round=R&offset=O&limit=L
//   GET  /api/samples/{id}/image?stretch=arcsinh&a=A&b=B&channel=C
//   GET  /api/items/{id}/mask
//   POST /api/items/{id}/decision   {"status": "accepted" | "rejected"}
//   GET  /api/progress
// Errors come back as {"error": message} with 400, 404 or 409.
class ReviewService {
 public:
  explicit ReviewService(HitlStore& store) : store_(store) {}

  using Params = std::map<std::string, std::string>;
  HttpResponse queue(const Params& params) const;
  HttpResponse sample_image(const std::string& sample_id, const Params& params) const;
  HttpResponse item_mask(const std::string& item_id) const;
  HttpResponse decide(const std::string& item_id, const std::string& body);
  HttpResponse progress() const;

 private:
  HitlStore& store_;
};

// Serves a ReviewService over HTTP on a background thread.
class ReviewServer {
 public:
  explicit ReviewServer(HitlStore& store);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  // Binds host:port (port 0 picks a free one) and returns the bound port.
  // Throws ErrorKind::config when binding fails.
  int start(const std::string& host, int port);
  // Blocks serving on the calling thread.
  void listen(const std::string& host, int port);
  void stop();

 private:
  void install_routes();

  ReviewService service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace lsbpan::hitl
