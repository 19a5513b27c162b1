"""BPSK over AWGN, with and without Hamming(7,4).

Simulated bit error rate next to Q(sqrt(2 SNR)), then the byte-level
effect of the code on a payload of random bytes.
"""

import numpy as np

from scait.channel import (
    ChannelConfig,
    awgn,
    bpsk_demodulate,
    bpsk_modulate,
    bpsk_theoretical_ber,
    transmit,
)

rng = np.random.default_rng(0)
bits = rng.integers(0, 2, 10**6).astype(np.uint8)

print("snr_db  simulated  theory")
for snr in (0, 2, 4, 6, 8):
    rx = bpsk_demodulate(awgn(bpsk_modulate(bits), snr, seed=snr))
    print(f"{snr:6d}  {np.mean(rx != bits):.3e}  {bpsk_theoretical_ber(snr):.3e}")

payload = rng.bytes(20_000)
print("\nbyte error rate on a 20 kB payload")
for snr in (2, 4, 6):
    for fec in ("none", "hamming74"):
        out, _ = transmit(payload, ChannelConfig(snr, fec, seed=1))
        ber = np.mean(np.frombuffer(out, np.uint8) != np.frombuffer(payload, np.uint8))
        print(f"  {snr} dB {fec:9s} {ber:.4f}")
