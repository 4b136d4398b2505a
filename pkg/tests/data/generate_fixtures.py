"""Regenerates the committed test fixtures. Run from the repo root:

    python3 tests/data/generate_fixtures.py

Deterministic: same seed, same bytes. The dataset has 200 rows (120 benign,
80 malicious split evenly over 5 attack classes) shaped like a NetFlow-v2
export with Label/Attack columns.
"""

from __future__ import annotations

import csv
import json
import random
from pathlib import Path

HERE = Path(__file__).parent
SEED = 20260809

ATTACK_CLASSES = ("botnet", "bruteforce", "ddos", "infiltration", "scan")

PRIVATE_HOSTS = [f"172.31.69.{i}" for i in range(5, 45)]
PUBLIC_SERVERS = [
    "8.8.8.8",
    "1.1.1.1",
    "9.9.9.9",
    "93.184.216.34",
    "185.199.108.153",
    "198.35.26.96",
]
PUBLIC_ATTACKERS = ["45.155.205.233", "103.41.124.15", "194.26.29.120"]

COLUMNS = [
    "IPV4_SRC_ADDR", "L4_SRC_PORT", "IPV4_DST_ADDR", "L4_DST_PORT", "PROTOCOL",
    "L7_PROTO", "IN_BYTES", "IN_PKTS", "OUT_BYTES", "OUT_PKTS", "TCP_FLAGS",
    "CLIENT_TCP_FLAGS", "SERVER_TCP_FLAGS", "FLOW_DURATION_MILLISECONDS",
    "DURATION_IN", "DURATION_OUT", "MIN_TTL", "MAX_TTL", "LONGEST_FLOW_PKT",
    "SHORTEST_FLOW_PKT", "MIN_IP_PKT_LEN", "MAX_IP_PKT_LEN",
    "SRC_TO_DST_SECOND_BYTES", "DST_TO_SRC_SECOND_BYTES",
    "RETRANSMITTED_IN_BYTES", "RETRANSMITTED_IN_PKTS", "RETRANSMITTED_OUT_BYTES",
    "RETRANSMITTED_OUT_PKTS", "SRC_TO_DST_AVG_THROUGHPUT",
    "DST_TO_SRC_AVG_THROUGHPUT", "NUM_PKTS_UP_TO_128_BYTES",
    "NUM_PKTS_128_TO_256_BYTES", "NUM_PKTS_256_TO_512_BYTES",
    "NUM_PKTS_512_TO_1024_BYTES", "NUM_PKTS_1024_TO_1514_BYTES",
    "TCP_WIN_MAX_IN", "TCP_WIN_MAX_OUT", "ICMP_TYPE", "ICMP_IPV4_TYPE",
    "DNS_QUERY_ID", "DNS_QUERY_TYPE", "DNS_TTL_ANSWER", "FTP_COMMAND_RET_CODE",
    "Label", "Attack",
]


def make_row(rng: random.Random, attack: str | None) -> dict:
    malicious = attack is not None
    protocol = rng.choices([6, 17, 1], weights=[8, 3, 1])[0]

    if malicious and attack in ("bruteforce", "scan") and rng.random() < 0.6:
        src = rng.choice(PUBLIC_ATTACKERS)
        dst = rng.choice(PRIVATE_HOSTS)
    elif malicious:
        src = rng.choice(PRIVATE_HOSTS)
        dst = rng.choice(PUBLIC_SERVERS + PRIVATE_HOSTS[:8])
    else:
        src = rng.choice(PRIVATE_HOSTS)
        dst = rng.choice(PUBLIC_SERVERS + PRIVATE_HOSTS)

    if protocol == 6:
        l7 = rng.choice(["7.0", "91.0", "92.0", "131.7", "0.0"])
        dst_port = {"7.0": 80, "91.0": 443, "92.0": 22, "131.7": 8080, "0.0": 8443}[l7]
        tcp_flags = rng.choice([2, 18, 22, 24, 27, 30, 31, 219])
    elif protocol == 17:
        l7 = rng.choice(["5.0", "0.0"])
        dst_port = 53 if l7 == "5.0" else rng.choice([123, 1900, 5353])
        tcp_flags = 0
    else:
        l7 = "0.0"
        dst_port = 0
        tcp_flags = 0

    if attack == "bruteforce":
        l7, dst_port = rng.choice([("92.0", 22), ("1.0", 21)])
        protocol = 6
        tcp_flags = rng.choice([22, 27, 30])

    in_pkts = rng.randint(1, 60 if not malicious else 400)
    out_pkts = max(0, in_pkts + rng.randint(-10, 10))
    shortest = rng.choice([40, 52, 60, 64])
    longest = rng.choice([v for v in (60, 120, 320, 576, 1032, 1454, 1514) if v >= shortest])
    in_bytes = in_pkts * rng.randint(shortest, longest)
    out_bytes = out_pkts * rng.randint(shortest, longest) if out_pkts else 0

    duration = rng.choice([0, rng.randint(1, 2000), rng.randint(2000, 120000),
                           rng.randint(120000, 4294964)])
    dur_in = rng.randint(0, duration) if duration else 0
    dur_out = rng.randint(0, duration) if duration else 0

    min_ttl, max_ttl = rng.choice([(32, 32), (63, 64), (64, 64), (127, 128), (128, 128),
                                   (254, 255), (255, 255)])

    def per_second(total_bytes: int) -> str:
        if duration == 0:
            return f"{total_bytes}.0"
        return f"{total_bytes * 1000 / duration:.1f}"

    def throughput(total_bytes: int) -> int:
        if duration == 0:
            return 0
        return int(total_bytes * 8000 / duration)

    buckets = [0, 0, 0, 0, 0]
    remaining = in_pkts + out_pkts
    for i, upper in enumerate((128, 256, 512, 1024, 1514)):
        if longest <= upper or i == 4:
            buckets[i] = remaining
            break
        share = rng.randint(0, remaining)
        buckets[i] = share
        remaining -= share

    retrans = protocol == 6 and rng.random() < 0.25
    retrans_in_pkts = rng.randint(1, max(1, in_pkts // 10)) if retrans else 0
    retrans_in_bytes = retrans_in_pkts * shortest
    retrans_out_pkts = rng.randint(0, max(1, out_pkts // 10)) if retrans else 0
    retrans_out_bytes = retrans_out_pkts * shortest

    is_dns = l7 == "5.0"
    is_ftp = dst_port == 21
    is_icmp = protocol == 1

    return {
        "IPV4_SRC_ADDR": src,
        "L4_SRC_PORT": rng.randint(1024, 65535),
        "IPV4_DST_ADDR": dst,
        "L4_DST_PORT": dst_port,
        "PROTOCOL": protocol,
        "L7_PROTO": l7,
        "IN_BYTES": in_bytes,
        "IN_PKTS": in_pkts,
        "OUT_BYTES": out_bytes,
        "OUT_PKTS": out_pkts,
        "TCP_FLAGS": tcp_flags,
        "CLIENT_TCP_FLAGS": tcp_flags & 0b11011 if protocol == 6 else 0,
        "SERVER_TCP_FLAGS": tcp_flags & 0b11110 if protocol == 6 else 0,
        "FLOW_DURATION_MILLISECONDS": duration,
        "DURATION_IN": dur_in,
        "DURATION_OUT": dur_out,
        "MIN_TTL": min_ttl,
        "MAX_TTL": max_ttl,
        "LONGEST_FLOW_PKT": longest,
        "SHORTEST_FLOW_PKT": shortest,
        "MIN_IP_PKT_LEN": shortest,
        "MAX_IP_PKT_LEN": longest,
        "SRC_TO_DST_SECOND_BYTES": per_second(in_bytes),
        "DST_TO_SRC_SECOND_BYTES": per_second(out_bytes),
        "RETRANSMITTED_IN_BYTES": retrans_in_bytes,
        "RETRANSMITTED_IN_PKTS": retrans_in_pkts,
        "RETRANSMITTED_OUT_BYTES": retrans_out_bytes,
        "RETRANSMITTED_OUT_PKTS": retrans_out_pkts,
        "SRC_TO_DST_AVG_THROUGHPUT": throughput(in_bytes),
        "DST_TO_SRC_AVG_THROUGHPUT": throughput(out_bytes),
        "NUM_PKTS_UP_TO_128_BYTES": buckets[0],
        "NUM_PKTS_128_TO_256_BYTES": buckets[1],
        "NUM_PKTS_256_TO_512_BYTES": buckets[2],
        "NUM_PKTS_512_TO_1024_BYTES": buckets[3],
        "NUM_PKTS_1024_TO_1514_BYTES": buckets[4],
        "TCP_WIN_MAX_IN": rng.choice([8192, 26883, 64240, 65535]) if protocol == 6 else 0,
        "TCP_WIN_MAX_OUT": rng.choice([0, 8192, 26883, 65535]) if protocol == 6 else 0,
        "ICMP_TYPE": 2048 if is_icmp else 0,
        "ICMP_IPV4_TYPE": 8 if is_icmp else 0,
        "DNS_QUERY_ID": rng.randint(1, 65535) if is_dns else 0,
        "DNS_QUERY_TYPE": 1 if is_dns else 0,
        "DNS_TTL_ANSWER": rng.choice([60, 120, 300]) if is_dns else 0,
        "FTP_COMMAND_RET_CODE": rng.choice([220, 331, 530]) if is_ftp else 0,
        "Label": 1 if malicious else 0,
        "Attack": attack if malicious else "Benign",
    }


def write_dataset() -> None:
    rng = random.Random(SEED)
    labels: list[str | None] = [None] * 120
    for attack in ATTACK_CLASSES:
        labels.extend([attack] * 16)
    rng.shuffle(labels)
    with open(HERE / "flows_small.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS)
        writer.writeheader()
        for attack in labels:
            writer.writerow(make_row(rng, attack))


def write_provider_fixtures() -> None:
    geo = [
        {"ip": "8.8.8.8", "country": "United States", "city": "Mountain View",
         "asn": 15169, "as_name": "GOOGLE", "retrieved_at": "2026-01-15T00:00:00Z"},
        {"ip": "1.1.1.1", "country": "Australia", "city": "Sydney",
         "asn": 13335, "as_name": "CLOUDFLARENET", "retrieved_at": "2026-01-15T00:00:00Z"},
        {"ip": "9.9.9.9", "country": "Switzerland", "city": "Zurich",
         "asn": 19281, "as_name": "QUAD9-AS-1", "retrieved_at": "2026-01-15T00:00:00Z"},
        {"ip": "93.184.216.34", "country": "United States", "city": "Norwell",
         "asn": 15133, "as_name": "EDGECAST", "retrieved_at": "2026-01-15T00:00:00Z"},
        {"ip": "185.199.108.153", "country": "United States", "city": "San Francisco",
         "asn": 54113, "as_name": "FASTLY", "retrieved_at": "2026-01-15T00:00:00Z"},
        {"ip": "45.155.205.233", "country": "Russia", "city": "Moscow",
         "asn": 206728, "as_name": "MEDIALAND", "retrieved_at": "2026-01-15T00:00:00Z"},
        {"ip": "103.41.124.15", "country": "Hong Kong", "city": "Kowloon",
         "asn": 55933, "as_name": "CLOUDIE", "retrieved_at": "2026-01-15T00:00:00Z"},
    ]
    cti = [
        {"ip": "45.155.205.233", "verdict": "malicious", "categories": ["scanner", "bruteforce"],
         "last_seen": "2026-01-14T21:00:00Z", "retrieved_at": "2026-01-15T00:00:00Z"},
        {"ip": "103.41.124.15", "verdict": "suspicious", "categories": ["scanner"],
         "last_seen": "2026-01-10T09:30:00Z", "retrieved_at": "2026-01-15T00:00:00Z"},
        {"ip": "194.26.29.120", "verdict": "malicious", "categories": ["bruteforce"],
         "last_seen": "2026-01-13T03:12:00Z", "retrieved_at": "2026-01-15T00:00:00Z"},
        {"ip": "8.8.8.8", "verdict": "benign", "categories": ["resolver"],
         "last_seen": None, "retrieved_at": "2026-01-15T00:00:00Z"},
        {"ip": "1.1.1.1", "verdict": "benign", "categories": ["resolver"],
         "last_seen": None, "retrieved_at": "2026-01-15T00:00:00Z"},
    ]
    with open(HERE / "geo_fixture.jsonl", "w", encoding="utf-8") as fh:
        for row in geo:
            fh.write(json.dumps(row) + "\n")
    with open(HERE / "cti_fixture.jsonl", "w", encoding="utf-8") as fh:
        for row in cti:
            fh.write(json.dumps(row) + "\n")


if __name__ == "__main__":
    write_dataset()
    write_provider_fixtures()
    print("fixtures written to", HERE)
