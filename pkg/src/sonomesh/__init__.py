"""sonomesh: an ultrasonic data-over-sound mesh networking stack.

Layers: guwal (16-byte application frames), guwmanet (reactive mesh
routing), ec (checksum-search error correction), phy (frequency-hopping
modem), channel (acoustic simulator), plus demo applications and
countermeasure tools.
"""

__version__ = "0.1.0"
