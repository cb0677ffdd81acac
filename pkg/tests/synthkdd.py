"""Deterministic KDD-format corpus generator for tests.

Emits text files in the exact KDD Cup 99 shape (42 comma-separated fields,
label with trailing period) with per-attack-type feature archetypes close
to the real data: smurf is an icmp/ecr_i flood with fixed-size payloads,
neptune a tcp SYN flood with saturated serror rates, normal traffic is
mostly http/smtp with moderate byte counts, and so on. A configurable
fraction of rows gets cross-contaminated feature draws so classifiers
cannot reach 100% and thresholds are meaningfully exercised.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

# per-category label mix, roughly proportional to the real 10% file
DEFAULT_MIX = {
    "normal": 1.0,
    "smurf": 0.717, "neptune": 0.273, "back": 0.0056, "teardrop": 0.0025,
    "pod": 0.00067, "land": 0.000054,
    "satan": 0.386, "ipsweep": 0.303, "portsweep": 0.254, "nmap": 0.056,
    "warezclient": 0.907, "guess_passwd": 0.047, "warezmaster": 0.018,
    "imap": 0.011, "ftp_write": 0.007, "multihop": 0.006, "phf": 0.004,
    "buffer_overflow": 0.58, "rootkit": 0.19, "loadmodule": 0.17, "perl": 0.06,
}

CATEGORY_OF = {
    "normal": "normal",
    "smurf": "dos", "neptune": "dos", "back": "dos", "teardrop": "dos",
    "pod": "dos", "land": "dos",
    "satan": "probe", "ipsweep": "probe", "portsweep": "probe", "nmap": "probe",
    "warezclient": "r2l", "guess_passwd": "r2l", "warezmaster": "r2l",
    "imap": "r2l", "ftp_write": "r2l", "multihop": "r2l", "phf": "r2l",
    "buffer_overflow": "u2r", "rootkit": "u2r", "loadmodule": "u2r", "perl": "u2r",
}

# desk-scale mirror: the per-category row counts a 5% stratified subsample
# of the real 10% file would produce
MIRROR_CATEGORY_COUNTS = {"normal": 4863, "dos": 19572, "probe": 205, "r2l": 56, "u2r": 6}


class _Block:
    """Column-wise record block under construction."""

    def __init__(self, n: int, rng: np.random.Generator):
        self.n = n
        self.rng = rng
        self.cols: dict[int, np.ndarray] = {}

    def set(self, idx: int, values) -> None:
        self.cols[idx] = np.broadcast_to(np.asarray(values), (self.n,)).copy()

    def ints(self, idx: int, low: int, high: int) -> None:
        self.set(idx, self.rng.integers(low, high + 1, size=self.n))

    def rate(self, idx: int, center: float, spread: float = 0.05) -> None:
        vals = np.clip(self.rng.normal(center, spread, size=self.n), 0.0, 1.0)
        self.set(idx, np.round(vals, 2))

    def choice(self, idx: int, options: list[str], p=None) -> None:
        self.set(idx, self.rng.choice(options, size=self.n, p=p))


def _base(n: int, rng) -> _Block:
    b = _Block(n, rng)
    for i in range(42):
        b.set(i, np.zeros(n, dtype=np.int64))
    b.set(1, np.repeat("tcp", n))
    b.set(2, np.repeat("http", n))
    b.set(3, np.repeat("SF", n))
    return b


def _normal(n, rng) -> _Block:
    b = _base(n, rng)
    b.choice(2, ["http", "smtp", "ftp_data", "domain_u", "telnet", "other"],
             p=[0.55, 0.15, 0.12, 0.12, 0.03, 0.03])
    b.choice(1, ["tcp", "udp"], p=[0.85, 0.15])
    b.ints(0, 0, 12)
    b.ints(4, 45, 4000)
    b.ints(5, 100, 30000)
    b.set(11, (rng.random(n) < 0.7).astype(int))  # logged_in
    b.ints(22, 1, 30)
    b.ints(23, 1, 30)
    b.rate(28, 0.95, 0.08)   # same_srv_rate
    b.rate(29, 0.03, 0.03)   # diff_srv_rate
    b.ints(31, 10, 255)
    b.ints(32, 10, 255)
    b.rate(33, 0.9, 0.1)
    b.rate(35, 0.05, 0.05)
    return b


def _smurf(n, rng) -> _Block:
    b = _base(n, rng)
    b.set(1, np.repeat("icmp", n))
    b.set(2, np.repeat("ecr_i", n))
    b.set(4, np.repeat(1032, n))  # fixed-size echo payload
    b.ints(22, 350, 511)
    b.ints(23, 350, 511)
    b.rate(28, 1.0, 0.0)
    b.ints(31, 255, 255)
    b.ints(32, 255, 255)
    b.rate(33, 1.0, 0.0)
    return b


def _neptune(n, rng) -> _Block:
    b = _base(n, rng)
    b.choice(2, ["private", "telnet", "ftp", "finger", "pop_3"],
             p=[0.6, 0.1, 0.1, 0.1, 0.1])
    b.set(3, np.repeat("S0", n))
    b.ints(22, 100, 511)
    b.ints(23, 1, 20)
    b.rate(24, 1.0, 0.01)  # serror_rate
    b.rate(25, 1.0, 0.01)
    b.rate(28, 0.06, 0.04)
    b.rate(29, 0.06, 0.04)
    b.ints(31, 255, 255)
    b.ints(32, 1, 30)
    b.rate(37, 1.0, 0.01)  # dst_host_serror_rate
    b.rate(38, 1.0, 0.01)  # dst_host_srv_serror_rate
    return b


def _back(n, rng) -> _Block:
    b = _base(n, rng)
    b.ints(4, 54000, 54540)
    b.ints(5, 8000, 10000)
    b.set(9, np.repeat(2, n))  # hot
    b.set(11, np.ones(n, dtype=int))
    b.ints(22, 1, 10)
    b.rate(28, 1.0, 0.02)
    return b


def _teardrop(n, rng) -> _Block:
    b = _base(n, rng)
    b.set(1, np.repeat("udp", n))
    b.set(2, np.repeat("private", n))
    b.set(4, np.repeat(28, n))
    b.set(7, np.repeat(3, n))  # wrong_fragment
    b.ints(22, 50, 300)
    b.rate(28, 1.0, 0.0)
    return b


def _pod(n, rng) -> _Block:
    b = _base(n, rng)
    b.set(1, np.repeat("icmp", n))
    b.set(2, np.repeat("ecr_i", n))
    b.set(4, np.repeat(1480, n))
    b.set(7, np.repeat(1, n))
    b.ints(22, 1, 20)
    return b


def _land(n, rng) -> _Block:
    b = _base(n, rng)
    b.set(2, np.repeat("finger", n))
    b.set(3, np.repeat("S0", n))
    b.set(6, np.ones(n, dtype=int))  # land
    b.rate(24, 1.0, 0.0)
    return b


def _satan(n, rng) -> _Block:
    b = _base(n, rng)
    b.choice(2, ["private", "other", "eco_i", "http", "sunrpc"],
             p=[0.4, 0.3, 0.1, 0.1, 0.1])
    b.choice(3, ["REJ", "SF", "RSTR"], p=[0.5, 0.3, 0.2])
    b.ints(22, 1, 150)
    b.rate(26, 0.7, 0.2)   # rerror_rate
    b.rate(29, 0.6, 0.25)  # diff_srv_rate
    b.ints(31, 200, 255)
    b.rate(35, 0.7, 0.2)
    return b


def _ipsweep(n, rng) -> _Block:
    b = _base(n, rng)
    b.set(1, np.repeat("icmp", n))
    b.set(2, np.repeat("eco_i", n))
    b.ints(4, 8, 20)
    b.ints(22, 1, 10)
    b.ints(31, 1, 60)
    b.rate(36, 0.6, 0.25)
    return b


def _portsweep(n, rng) -> _Block:
    b = _base(n, rng)
    b.choice(2, ["private", "http", "telnet", "ftp"], p=[0.7, 0.1, 0.1, 0.1])
    b.choice(3, ["REJ", "SH", "RSTR"], p=[0.4, 0.3, 0.3])
    b.ints(0, 0, 3000)
    b.ints(22, 1, 5)
    b.rate(26, 0.8, 0.2)
    b.rate(29, 0.8, 0.15)
    return b


def _nmap(n, rng) -> _Block:
    b = _base(n, rng)
    b.choice(1, ["icmp", "udp", "tcp"], p=[0.5, 0.3, 0.2])
    b.choice(2, ["eco_i", "private", "domain_u"], p=[0.5, 0.3, 0.2])
    b.ints(22, 1, 8)
    b.rate(29, 0.5, 0.3)
    return b


def _warezclient(n, rng) -> _Block:
    b = _base(n, rng)
    b.choice(2, ["ftp", "ftp_data"], p=[0.35, 0.65])
    b.ints(0, 0, 2000)
    b.ints(4, 300, 2000)
    b.ints(5, 100000, 5000000)
    b.set(21, np.ones(n, dtype=int))  # is_guest_login
    b.set(11, np.ones(n, dtype=int))
    b.ints(22, 1, 6)
    b.rate(28, 1.0, 0.02)
    return b


def _guess_passwd(n, rng) -> _Block:
    b = _base(n, rng)
    b.choice(2, ["pop_3", "telnet", "imap4"], p=[0.5, 0.4, 0.1])
    b.ints(0, 0, 5)
    b.ints(4, 100, 130)
    b.ints(5, 180, 260)
    b.set(10, rng.integers(1, 6, size=n))  # num_failed_logins
    b.set(9, np.repeat(1, n))
    b.ints(22, 1, 4)
    return b


def _r2l_misc(label):
    def gen(n, rng) -> _Block:
        b = _base(n, rng)
        b.choice(2, ["ftp", "telnet", "imap4", "http", "login"],
                 p=[0.3, 0.3, 0.2, 0.1, 0.1])
        b.ints(0, 0, 300)
        b.ints(4, 100, 3000)
        b.ints(5, 200, 6000)
        b.set(11, (rng.random(n) < 0.5).astype(int))
        b.set(9, rng.integers(0, 3, size=n))
        b.ints(22, 1, 5)
        return b
    return gen


def _u2r(label):
    def gen(n, rng) -> _Block:
        b = _base(n, rng)
        b.choice(2, ["telnet", "ftp", "login"], p=[0.7, 0.2, 0.1])
        b.ints(0, 30, 400)
        b.ints(4, 500, 6000)
        b.ints(5, 500, 10000)
        b.set(9, rng.integers(2, 6, size=n))        # hot
        b.set(11, np.ones(n, dtype=int))
        b.set(13, (rng.random(n) < 0.8).astype(int))  # root_shell
        b.set(12, rng.integers(0, 4, size=n))       # num_compromised
        b.set(15, rng.integers(0, 5, size=n))       # num_root
        b.set(16, rng.integers(0, 3, size=n))
        b.ints(22, 1, 4)
        return b
    return gen


GENERATORS = {
    "normal": _normal,
    "smurf": _smurf, "neptune": _neptune, "back": _back, "teardrop": _teardrop,
    "pod": _pod, "land": _land,
    "satan": _satan, "ipsweep": _ipsweep, "portsweep": _portsweep, "nmap": _nmap,
    "warezclient": _warezclient, "guess_passwd": _guess_passwd,
    "warezmaster": _r2l_misc("warezmaster"), "imap": _r2l_misc("imap"),
    "ftp_write": _r2l_misc("ftp_write"), "multihop": _r2l_misc("multihop"),
    "phf": _r2l_misc("phf"),
    "buffer_overflow": _u2r("buffer_overflow"), "rootkit": _u2r("rootkit"),
    "loadmodule": _u2r("loadmodule"), "perl": _u2r("perl"),
}

# column indices of [0,1]-typed rate fields (canonical KDD order)
RATE_COLS = (24, 25, 26, 27, 28, 29, 30, 33, 34, 35, 36, 37, 38, 39, 40)


def _format_lines(block: _Block, label: str) -> list[str]:
    n = block.n
    fields: list[list[str]] = []
    for i in range(42):
        if i == 41:
            fields.append([f"{label}."] * n)
        elif i in (1, 2, 3):
            fields.append([str(v) for v in block.cols[i]])
        elif i in RATE_COLS:
            fields.append([f"{float(v):.2f}" for v in block.cols[i]])
        else:
            fields.append([str(int(v)) for v in block.cols[i]])
    return [",".join(row) for row in zip(*fields)]


def label_counts_for(category_counts: dict[str, int]) -> dict[str, int]:
    """Distribute per-category totals over attack labels by DEFAULT_MIX."""
    out: dict[str, int] = {}
    for cat, total in category_counts.items():
        labels = [lb for lb, c in CATEGORY_OF.items() if c == cat]
        weights = np.array([DEFAULT_MIX[lb] for lb in labels], dtype=np.float64)
        weights /= weights.sum()
        alloc = np.floor(weights * total).astype(int)
        while alloc.sum() < total:
            alloc[int(np.argmax(weights))] += 1
            weights[int(np.argmax(weights))] *= 0.999
        for lb, k in zip(labels, alloc):
            if k > 0:
                out[lb] = k
    return out


def generate_corpus(path: str | Path, category_counts: dict[str, int] | None = None,
                    seed: int = 0, confusion_fraction: float = 0.06) -> Path:
    """Write a synthetic KDD-format corpus; deterministic per seed."""
    rng = np.random.default_rng(seed)
    counts = label_counts_for(category_counts or MIRROR_CATEGORY_COUNTS)
    lines: list[str] = []
    pool: list[_Block] = []
    for label in sorted(counts):
        block = GENERATORS[label](counts[label], rng)
        pool.append(block)
        lines += _format_lines(block, label)
    # cross-contaminate a fraction of rows: swap selected numeric columns with
    # draws from another archetype so class boundaries are not razor sharp
    n = len(lines)
    n_confused = int(confusion_fraction * n)
    if n_confused and len(pool) > 1:
        rows = rng.choice(n, size=n_confused, replace=False)
        for row in rows:
            parts = lines[row].split(",")
            donor_block = pool[int(rng.integers(0, len(pool)))]
            donor_row = int(rng.integers(0, donor_block.n))
            for col in (22, 23, 28, 29, 31, 32, 33):
                v = donor_block.cols[col][donor_row]
                parts[col] = f"{float(v):.2f}" if col in RATE_COLS else str(int(v))
            lines[row] = ",".join(parts)
    order = rng.permutation(n)
    text = "\n".join(lines[i] for i in order) + "\n"
    out = Path(path)
    out.write_text(text)
    return out
