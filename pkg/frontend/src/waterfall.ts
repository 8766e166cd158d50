// Falling-chord display geometry. The lookahead window maps to the full
// grid height, so a chord's lane slides down and touches the piano edge
// (y == height) exactly at its frame time; changing the lookahead rescales
// the fall speed. Lanes for frames inside the commit horizon render
// opaque, the rest semi-transparent and free to change.

import { FrameClock } from "./timing.js";

export interface LaneSource {
    frame: number;
    token: string;
    pitches: number[];
}

export interface Lane {
    frame: number;
    token: string;
    label: string;
    pitches: number[];
    committed: boolean;
    opacity: number;
    y: number; // 0 = top of grid, height = piano edge
}

export const COMMITTED_OPACITY = 1.0;
export const UNCOMMITTED_OPACITY = 0.45;

export function laneOpacity(frame: number, committedHorizon: number): number {
    return frame < committedHorizon ? COMMITTED_OPACITY : UNCOMMITTED_OPACITY;
}

export function laneY(frameTimeMs: number, nowMs: number, windowMs: number,
                      height: number): number {
    // due in windowMs -> y 0; due now -> y == height (touching the piano)
    return height * (1 - (frameTimeMs - nowMs) / windowMs);
}

export function buildLanes(
    entries: Iterable<LaneSource>,
    nowMs: number,
    clock: FrameClock,
    lookaheadFramesCount: number,
    committedHorizon: number,
    height: number,
    labelOf: (token: string) => string,
): Lane[] {
    const windowMs = lookaheadFramesCount * clock.frameMs;
    const cur = clock.frameAt(nowMs);
    const lanes: Lane[] = [];
    for (const e of entries) {
        if (e.frame <= cur || e.frame > cur + lookaheadFramesCount) continue;
        const y = laneY(clock.timeOfFrame(e.frame), nowMs, windowMs, height);
        const committed = e.frame < committedHorizon;
        lanes.push({
            frame: e.frame,
            token: e.token,
            label: labelOf(e.token),
            pitches: e.pitches,
            committed,
            opacity: laneOpacity(e.frame, committedHorizon),
            y,
        });
    }
    lanes.sort((a, b) => a.frame - b.frame);
    return lanes;
}
