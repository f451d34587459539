#!/usr/bin/env python3
"""Regenerate the procedural mesh assets (the sphere benchmark scene).

The bunny asset is the classic decimated Stanford Bunny and is committed
directly; this script only rebuilds what can be generated.
"""

from pathlib import Path

from nbvplan.mesh import make_icosphere, save_mesh_ply

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    sphere = make_icosphere(0.3, subdivisions=4)
    out = ROOT / "assets" / "sphere_r0.3.ply"
    save_mesh_ply(sphere, out)
    print(f"wrote {out}: {len(sphere.vertices)} vertices, {len(sphere.triangles)} triangles")
