"""Visibility screening of transmitter/receiver pairs at one receive epoch."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..constants import R_MOON_KM
from ..frames import Epoch, moon_position, segment_hits_sphere, solve_light_time, tangential_altitude
from ..link import LinkBudget, compute_cn0, off_boresight_angle

VISIBLE = "visible"
EARTH_OCCULTED = "earth_occulted"
MOON_OCCULTED = "moon_occulted"
BELOW_MASK = "below_mask"


@dataclass(frozen=True, eq=False)
class LinkGeometry:
    epoch: Epoch                 # receive epoch
    t_tx: Epoch
    tx: str
    rx: str
    tx_pos: np.ndarray           # ECI km at t_tx
    rx_pos: np.ndarray           # ECI km at epoch
    tangential_alt_km: float
    status: str
    tx_off_boresight_deg: float = math.nan
    rx_off_boresight_deg: float = math.nan

    @property
    def visible(self) -> bool:
        return self.status == VISIBLE


def elevation_deg(site_pos, moon_pos, target_pos) -> float:
    up = np.asarray(site_pos) - np.asarray(moon_pos)
    los = np.asarray(target_pos) - np.asarray(site_pos)
    c = float(up @ los) / (np.linalg.norm(up) * np.linalg.norm(los))
    return 90.0 - math.degrees(math.acos(max(-1.0, min(1.0, c))))


def screen_links(cfg, epoch: Epoch) -> list[LinkGeometry]:
    """Every (tx, rx) pair at ``epoch`` with its visibility status."""
    moon = moon_position(epoch)
    out = []
    for rcv in cfg.receivers:
        rx_state = rcv.source.state(epoch)
        rx_pos = np.array(rx_state.position)
        for tx in cfg.transmitters:
            t_tx, tx_pos = solve_light_time(rx_state, tx.source)
            tx_pos = np.array(tx_pos)
            alt = tangential_altitude(tx_pos, rx_pos)
            if alt <= 0.0:
                status = EARTH_OCCULTED
            elif rcv.surface is not None and \
                    elevation_deg(rx_pos, moon, tx_pos) < rcv.surface.elevation_mask_deg:
                status = BELOW_MASK
            elif rcv.surface is None and segment_hits_sphere(tx_pos, rx_pos, moon, R_MOON_KM):
                status = MOON_OCCULTED
            else:
                status = VISIBLE
            g = LinkGeometry(epoch, t_tx, tx.name, rcv.name, tx_pos, rx_pos, alt, status)
            if status == VISIBLE:
                g = LinkGeometry(epoch, t_tx, tx.name, rcv.name, tx_pos, rx_pos, alt, status,
                                 off_boresight_angle(tx_pos, rx_pos, tx.pattern.boresight),
                                 off_boresight_angle(rx_pos, tx_pos, rcv.pattern.boresight))
            out.append(g)
    return out


def enumerate_links(cfg, epoch: Epoch) -> list[LinkGeometry]:
    """Visible (non-occulted, above-mask) link geometries at ``epoch``."""
    return [g for g in screen_links(cfg, epoch) if g.visible]


def link_budget(cfg, geom: LinkGeometry, f: float) -> LinkBudget:
    tx = next(t for t in cfg.transmitters if t.name == geom.tx)
    rx = next(r for r in cfg.receivers if r.name == geom.rx)
    return compute_cn0(geom.tx_pos, geom.rx_pos, tx.pattern, rx.pattern, tx.eirp_dbw, f,
                       cfg.system)
