"""Malware families of the default world and their relevance tiers.

Sample counts sum to 12187 and split roughly 54% ddos / 21% trojan / 25% targeted.
"""

from collections import namedtuple

Family = namedtuple("Family", ["name", "category", "count", "aliases"])

FAMILIES = (
    Family("Avzhan", "ddos", 3458, ()),
    Family("Darkness", "ddos", 1878, ("Optima",)),
    Family("Ddoser", "ddos", 502, ("BlackEnergy",)),
    Family("jkddos", "ddos", 333, ()),
    Family("N0ise", "ddos", 431, ()),
    Family("ShadyRAT", "targeted", 1287, ()),
    Family("DNSCalc", "targeted", 403, ()),
    Family("Lurid", "targeted", 399, ()),
    Family("Getkys", "targeted", 953, ()),
    Family("ZeroAccess", "trojan", 568, ()),
    Family("Zeus", "trojan", 1975, ("Zbot",)),
)

CATEGORIES = ("ddos", "trojan", "targeted", "other")

CATEGORY_SHARES = {"ddos": 0.54, "trojan": 0.21, "targeted": 0.25}


def label_categories():
    return {f.name: f.category for f in FAMILIES}
