"""Lane detection: directional edge filters by frequency-domain convolution, then threshold."""

from __future__ import annotations

from collections import Counter

import numpy as np

from .. import api, kernels
from ..errors import InvalidArgument
from ..model import KernelName
from .base import BITS_PER_REAL, AppSpec, func_node, node, require_positive

MASK_KINDS = ("horizontal", "vertical", "diagonal", "antidiagonal")


def edge_masks(dim: int) -> list[np.ndarray]:
    """Odd-sized directional difference masks, normalised by their area."""
    c = dim // 2
    i, j = np.mgrid[-c:c + 1, -c:c + 1]
    masks = [np.sign(i), np.sign(j), np.sign(i + j), np.sign(i - j)]
    return [m.astype(np.float64) / (dim * dim) for m in masks]


def synthetic_road(h: int, w: int, noise: float, rng: np.random.Generator) -> np.ndarray:
    """Dark road with two bright lane markings converging toward the horizon."""
    img = np.full((h, w), 0.3)
    horizon = h // 3
    for y in range(horizon, h):
        t = (y - horizon) / max(1, h - 1 - horizon)
        spread = 0.08 * w + t * 0.35 * w
        for x in (w / 2 - spread, w / 2 + spread):
            x0 = int(round(x))
            img[y, max(0, x0 - 1):min(w, x0 + 1)] = 0.9
    if noise:
        img = img + noise * rng.standard_normal(img.shape)
    return img


def combine(responses, threshold: float) -> np.ndarray:
    strength = np.max(np.abs(np.stack(responses)), axis=0)
    return strength > threshold


def _prepare(frame: dict, conv: int):
    hp, wp = frame["canvas"].shape
    frame[f"fi{conv}"][...] = kernels.pad_image(frame["image"], hp, wp)
    frame[f"fm{conv}"][...] = kernels.place_mask(frame["masks"][conv], hp, wp)


def _barrier(frame: dict):
    pass


def _threshold(frame: dict, threshold: float):
    h, w = frame["image"].shape
    responses = [frame[f"pr{c}"].real[:h, :w] for c in range(len(frame["masks"]))]
    frame["lanes"][...] = combine(responses, threshold)


class LaneDetection(AppSpec):
    name = "lane_detection"
    aliases = ("ld",)
    defaults = {"image_h": 64, "image_w": 128, "mask_dim": 3, "threshold": 0.1, "noise": 0.02, "uniform": False}
    full_scale_params = {"image_h": 540, "image_w": 960}
    funcs = {"ld_prepare": _prepare, "ld_barrier": _barrier, "ld_threshold": _threshold}

    def validate(self, p):
        require_positive(self.name, image_h=p["image_h"], image_w=p["image_w"], mask_dim=p["mask_dim"])
        if p["mask_dim"] % 2 == 0:
            raise InvalidArgument("lane_detection: mask_dim must be odd")
        if p["mask_dim"] > min(p["image_h"], p["image_w"]):
            raise InvalidArgument("lane_detection: mask larger than image")

    def make_frame(self, p):
        h, w = p["image_h"], p["image_w"]
        if p["uniform"]:
            img = np.full((h, w), 0.5)
        else:
            img = synthetic_road(h, w, p["noise"], self.rng(p))
        return {"image": img, "masks": edge_masks(p["mask_dim"])}

    def run(self, frame, p):
        image = frame["image"]
        responses = []
        for mask in frame["masks"]:
            out = np.empty(image.shape)
            api.cedr_conv2d(image, mask, out)
            responses.append(out)
        return combine(responses, p["threshold"])

    def canvas(self, p):
        return kernels.conv_canvas(p["image_h"], p["image_w"])

    def dag_nodes(self, p):
        hp, wp = self.canvas(p)
        n_masks = len(MASK_KINDS)
        nodes = []
        finals = []
        for c in range(n_masks):
            rows = [f"c{c}_{b}row{r}" for b in ("i", "m") for r in range(hp)]
            cols = [f"c{c}_{b}col{k}" for b in ("i", "m") for k in range(wp)]
            irows = [f"c{c}_prow{r}" for r in range(hp)]
            icols = [f"c{c}_pcol{k}" for k in range(wp)]
            finals += icols
            nodes.append(func_node(f"c{c}_prepare", "ld_prepare", rows, conv=c))
            for b, buf in (("i", f"fi{c}"), ("m", f"fm{c}")):
                nodes += [node(f"c{c}_{b}row{r}", KernelName.FFT, [wp],
                               {"input": f"{buf}[{r}]", "output": f"{buf}[{r}]"}, [f"c{c}_rows"])
                          for r in range(hp)]
            nodes.append(func_node(f"c{c}_rows", "ld_barrier", cols))
            for b, buf in (("i", f"fi{c}"), ("m", f"fm{c}")):
                nodes += [node(f"c{c}_{b}col{k}", KernelName.FFT, [hp],
                               {"input": f"{buf}[:,{k}]", "output": f"{buf}[:,{k}]"}, [f"c{c}_zip"])
                          for k in range(wp)]
            nodes.append(node(f"c{c}_zip", KernelName.ZIP, [hp * wp],
                              {"a": f"fi{c}", "b": f"fm{c}", "output": f"pr{c}"}, irows))
            nodes += [node(f"c{c}_prow{r}", KernelName.IFFT, [wp],
                           {"input": f"pr{c}[{r}]", "output": f"pr{c}[{r}]"}, [f"c{c}_irows"])
                      for r in range(hp)]
            nodes.append(func_node(f"c{c}_irows", "ld_barrier", icols))
            nodes += [node(f"c{c}_pcol{k}", KernelName.IFFT, [hp],
                           {"input": f"pr{c}[:,{k}]", "output": f"pr{c}[:,{k}]"}, ["threshold"])
                      for k in range(wp)]
        nodes.append(func_node("threshold", "ld_threshold", threshold=p["threshold"]))
        return nodes

    def dag_buffers(self, frame, p):
        hp, wp = self.canvas(p)
        bufs = {"image": frame["image"], "masks": frame["masks"],
                "canvas": np.empty((hp, wp), dtype=np.uint8),
                "lanes": np.zeros(frame["image"].shape, dtype=bool)}
        for c in range(len(frame["masks"])):
            for prefix in ("fi", "fm", "pr"):
                bufs[f"{prefix}{c}"] = np.empty((hp, wp), dtype=np.complex128)
        return bufs

    def dag_result(self, buffers, p):
        return buffers["lanes"]

    def frame_mb(self, p):
        return p["image_h"] * p["image_w"] * BITS_PER_REAL / 1e6

    def task_counts(self, p, mode="API"):
        hp, wp = self.canvas(p)
        n = len(MASK_KINDS)
        counts = Counter({KernelName.FFT: 2 * n * (hp + wp), KernelName.IFFT: n * (hp + wp), KernelName.ZIP: n})
        if mode == "DAG":
            counts[KernelName.FUNC] = 3 * n + 1
        return counts


APP = LaneDetection()
