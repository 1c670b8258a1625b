#include "ctlab/timing_channel.h"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>

#include <random>
#include <thread>

#include "ctlab/hex.h"
#include "doctest.h"

using namespace ctlab;

namespace {

const Key128 kFipsKey = parse_key("000102030405060708090a0b0c0d0e0f");
const Block kFipsPt = parse_block("00112233445566778899aabbccddeeff");
const Block kFipsCt = parse_block("69c4e0d86a7b0430d8cdb78070b4c55a");

ChannelConfig fips_config() {
  ChannelConfig cfg;
  cfg.key = kFipsKey;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("names") {
  CHECK(parse_backend("native") == Backend::kNative);
  CHECK(parse_backend(to_string(Backend::kSimulated)) == Backend::kSimulated);
  CHECK(parse_timing_scope("whole_handler") == TimingScope::kWholeHandler);
  CHECK_THROWS_AS(parse_backend("fpga"), std::invalid_argument);
  CHECK_THROWS_AS(parse_timing_scope("all"), std::invalid_argument);
}

TEST_CASE("packet size must hold a request") {
  ChannelConfig cfg = fips_config();
  cfg.packet_size = 16;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.packet_size = 17;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("service handles requests in-process") {
  EncryptionService service(fips_config());

  const auto timing = service.handle(
      wire::encode_request({wire::MessageType::kTiming, kFipsPt}, 800));
  REQUIRE(timing.has_value());
  const auto resp = wire::decode_response(*timing);
  REQUIRE(resp.has_value());
  CHECK(resp->type == wire::MessageType::kTiming);
  CHECK(resp->plaintext == kFipsPt);
  CHECK(resp->cycles > 0);

  const auto ct = service.handle(
      wire::encode_request({wire::MessageType::kCiphertext, kFipsPt}, 17));
  REQUIRE(ct.has_value());
  CHECK(wire::decode_response(*ct)->ciphertext == kFipsCt);

  std::vector<std::uint8_t> runt(16, 1);
  CHECK_FALSE(service.handle(runt).has_value());
  CHECK(service.dropped() == 1);
}

TEST_CASE("simulated cycles equal the cache simulation") {
  ChannelConfig cfg = fips_config();
  cfg.sim.cache.line_size = 4;
  cfg.sim.cache.num_sets = 1024;
  cfg.sim.cache.associativity = 1;
  cfg.sim.ambient.lines = 24;
  cfg.sim.ambient.seed = 7;
  SimulatedBackend backend(cfg.key, CountermeasureKind::kNone, cfg.sim, 1);

  CacheState cache(cfg.sim.cache);
  const MemoryLayout layout = MemoryLayout::packed(cfg.sim.ambient);
  std::mt19937_64 rng(12);
  for (int i = 0; i < 50; ++i) {
    Block pt;
    for (auto& b : pt.bytes) b = static_cast<std::uint8_t>(rng());
    Block ct;
    const std::uint64_t cycles = backend.timed_encrypt(pt, ct);
    AccessTrace trace;
    encrypt(pt, expand_key(cfg.key), TableView::of(default_ttables()), trace);
    const SimResult expected = run_encryption(cache, trace, layout, {});
    CHECK(cycles == expected.cycles);
    CHECK(backend.last_result() == expected);
  }
}

TEST_CASE("simulated timing is deterministic") {
  EncryptionService a(fips_config());
  EncryptionService b(fips_config());
  const std::uint64_t first = a.time_encryption(kFipsPt).cycles;
  CHECK(a.time_encryption(kFipsPt).cycles == first);
  CHECK(b.time_encryption(kFipsPt).cycles == first);
}

TEST_CASE("random loop is strictly slower than none") {
  ChannelConfig none = fips_config();
  ChannelConfig loop = fips_config();
  loop.countermeasure = CountermeasureKind::kRandomLoop;
  EncryptionService plain(none);
  EncryptionService slow(loop);
  for (int i = 0; i < 100; ++i) {
    Block pt = kFipsPt;
    pt[0] = static_cast<std::uint8_t>(i);
    CHECK(slow.time_encryption(pt).cycles > plain.time_encryption(pt).cycles);
  }
}

TEST_CASE("ciphertext queries leave countermeasure state alone") {
  ChannelConfig cfg = fips_config();
  cfg.countermeasure = CountermeasureKind::kSpecifiedLoop;
  EncryptionService a(cfg);
  EncryptionService b(cfg);
  for (int i = 0; i < 5; ++i) CHECK(a.ciphertext(kFipsPt) == kFipsCt);
  for (int i = 0; i < 6; ++i) {
    CHECK(a.time_encryption(kFipsPt).cycles == b.time_encryption(kFipsPt).cycles);
  }
}

TEST_CASE("native backend reports sane cycle counts") {
  for (TimingScope scope : {TimingScope::kEncryptOnly, TimingScope::kWholeHandler}) {
    ChannelConfig cfg = fips_config();
    cfg.backend = Backend::kNative;
    cfg.timing_scope = scope;
    EncryptionService service(cfg);
    for (int i = 0; i < 200; ++i) {
      const auto bytes = service.handle(
          wire::encode_request({wire::MessageType::kTiming, kFipsPt}, 800));
      REQUIRE(bytes.has_value());
      const std::uint64_t cycles = wire::decode_response(*bytes)->cycles;
      CHECK(cycles > 0);
      CHECK(cycles < 1000000000ull);
    }
  }
  const TimerCalibration cal = calibrate_timer();
  CHECK(cal.overhead < 1000000);
}

TEST_CASE("UDP server and client over loopback") {
  UdpTimingServer server(fips_config());
  REQUIRE(server.port() != 0);
  std::jthread worker([&](std::stop_token st) { server.run(st); });

  TimingClient client("127.0.0.1", server.port(), std::chrono::milliseconds(2000));
  const TimingSample s = client.measure_once(kFipsPt, 800);
  CHECK(s.plaintext == kFipsPt);
  CHECK(s.cycles > 0);
  CHECK(client.ciphertext_query(kFipsPt) == kFipsCt);
  CHECK(client.ciphertext_query(kFipsPt) == kFipsCt);

  // A runt datagram gets no reply; the server keeps serving.
  UdpSocket raw;
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(server.port());
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  const std::uint8_t runt[5] = {1, 2, 3, 4, 5};
  ::sendto(raw.fd(), runt, sizeof(runt), 0, reinterpret_cast<sockaddr*>(&addr),
           sizeof(addr));
  raw.set_receive_timeout(std::chrono::milliseconds(300));
  std::uint8_t buf[64];
  CHECK(::recv(raw.fd(), buf, sizeof(buf), 0) < 0);
  CHECK(client.measure_once(kFipsPt, 64).plaintext == kFipsPt);
  worker.request_stop();
  worker.join();
  CHECK(server.dropped() == 1);
  CHECK(server.served() == 4);
}

TEST_CASE("client timeout and bind failure") {
  UdpTimingServer server(fips_config());
  // Nobody runs the server loop, so requests go unanswered.
  TimingClient client("127.0.0.1", server.port(), std::chrono::milliseconds(50));
  CHECK_THROWS_AS(client.measure_once(kFipsPt), TimeoutError);
  CHECK(client.timeouts() == 1);

  ChannelConfig clash = fips_config();
  clash.port = server.port();
  CHECK_THROWS_AS(UdpTimingServer{clash}, BindError);
}
