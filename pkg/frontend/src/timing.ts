// Frame math mirror of the server side: 4 frames per beat (one per 1/16th
// note), frame 0 starts at the session's first note. A timestamp exactly
// on a boundary belongs to the frame that starts there.

export const FRAMES_PER_BEAT = 4;

export function frameDurationMs(bpm: number): number {
    if (!(bpm > 0) || !Number.isFinite(bpm)) {
        throw new Error(`bpm must be a positive finite number, got ${bpm}`);
    }
    return 60000 / (bpm * FRAMES_PER_BEAT);
}

export class FrameClock {
    readonly bpm: number;
    readonly sessionStartMs: number;
    readonly frameMs: number;

    constructor(bpm: number, sessionStartMs: number) {
        this.bpm = bpm;
        this.sessionStartMs = sessionStartMs;
        this.frameMs = frameDurationMs(bpm);
    }

    timeOfFrame(frame: number): number {
        return this.sessionStartMs + frame * this.frameMs;
    }

    frameAt(nowMs: number): number {
        if (nowMs < this.sessionStartMs) {
            throw new Error(`timestamp ${nowMs} precedes session start`);
        }
        let f = Math.floor((nowMs - this.sessionStartMs) / this.frameMs);
        while (this.timeOfFrame(f + 1) <= nowMs) f += 1;
        while (f > 0 && this.timeOfFrame(f) > nowMs) f -= 1;
        return f;
    }
}
