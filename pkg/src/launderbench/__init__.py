"""launderbench: laundering-attack augmentation and scoring for spoof detection.

The package covers the full loop: reading and writing mono speech audio
(WAV and FLAC, plus pluggable lossy codecs), applying laundering attacks
(reverberation, additive noise, recompression, resampling, lowpass
filtering), planning deterministic augmentation runs over protocol
manifests, and scoring detector output with EER, DCF, and Cllr metrics
broken down by attack and codec.
"""

__version__ = "0.1.0"
