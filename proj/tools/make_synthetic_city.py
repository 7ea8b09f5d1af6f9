#!/usr/bin/env python3
"""Writes a small synthetic city (GeoJSON layers + profile) in UTM 18N meters."""
import json
import random
import sys
from pathlib import Path

X0, Y0 = 583000.0, 4507000.0
SIZE = 1350.0
BLOCK = 90.0
CRS = {"type": "name", "properties": {"name": "urn:ogc:def:crs:EPSG::32618"}}


def ring(x0, y0, x1, y1):
    return [[[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]]


def collection(features):
    return {"type": "FeatureCollection", "crs": CRS, "features": features}


def feature(geometry, props=None):
    return {"type": "Feature", "geometry": geometry, "properties": props or {}}


def main(out):
    rng = random.Random(20240611)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    n = int(SIZE / BLOCK)

    roads = []
    for i in range(n + 1):
        major = i % 5 == 0
        kind = "primary" if major else "residential"
        v = i * BLOCK
        roads.append(feature({"type": "LineString", "coordinates": [[X0 + v, Y0], [X0 + v, Y0 + SIZE]]}, {"highway": kind}))
        roads.append(feature({"type": "LineString", "coordinates": [[X0, Y0 + v], [X0 + SIZE, Y0 + v]]}, {"highway": kind}))

    railways = [feature({"type": "LineString", "coordinates": [[X0, Y0 + 400], [X0 + SIZE, Y0 + 980]]})]
    water = [feature({"type": "Polygon", "coordinates": ring(X0 + SIZE - 120, Y0, X0 + SIZE, Y0 + SIZE)})]

    codes = ["01", "01", "01", "02", "05", "05", "06", "09", "04"]
    parcels, buildings = [], []
    gap = 8.0
    for r in range(n):
        for c in range(n):
            x0, y0 = X0 + c * BLOCK + gap, Y0 + r * BLOCK + gap
            x1, y1 = x0 + BLOCK - 2 * gap, y0 + BLOCK - 2 * gap
            if x1 > X0 + SIZE - 120:
                continue
            code = rng.choice(codes)
            parcels.append(feature({"type": "Polygon", "coordinates": ring(x0, y0, x1, y1)}, {"LandUse": code}))
            if code == "09":
                continue
            base = {"01": 12, "02": 25, "05": 60, "06": 15, "04": 20}[code]
            for bx in range(2):
                for by in range(2):
                    if rng.random() < 0.3:
                        continue
                    w = (x1 - x0) / 2
                    h = (y1 - y0) / 2
                    bx0, by0 = x0 + bx * w + 4, y0 + by * h + 4
                    height = round(base * rng.lognormvariate(0, 0.5), 1)
                    props = {"heightroof": height if rng.random() > 0.05 else None}
                    buildings.append(feature({"type": "Polygon", "coordinates": ring(bx0, by0, bx0 + w - 8, by0 + h - 8)}, props))

    layers = {"roads": roads, "railways": railways, "water": water, "landuse": parcels, "buildings": buildings}
    for name, feats in layers.items():
        (out / f"{name}.geojson").write_text(json.dumps(collection(feats)) + "\n")

    profile = {
        "city": "Synthetic City",
        "crs": "EPSG:32618",
        "extent": [X0, Y0, X0 + SIZE, Y0 + SIZE],
        "layers": {
            "water": "water.geojson",
            "railways": "railways.geojson",
            "roads": "roads.geojson",
            "land_use": "landuse.geojson",
            "buildings": "buildings.geojson",
        },
        "land_use": {
            "attribute": "LandUse",
            "mapping": {"01": "Residential", "02": "Residential", "04": "MixedUse", "05": "Commercial",
                        "06": "Manufacturing", "09": "Park"},
        },
        "buildings": {"height_attribute": "heightroof"},
        "render": {"image_size": 256},
        "split": {"test_ratio": 0.2, "seed": 11},
    }
    (out / "city.json").write_text(json.dumps(profile, indent=2) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/synthetic_city")
