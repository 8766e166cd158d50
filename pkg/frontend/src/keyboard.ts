// Two-row computer-keyboard piano covering C4-E5, with octave shift.
// Bottom row (z..) is the lower octave, top row (q..) the upper; the
// number/letter interleaving mirrors black keys.

const LOWER_ROW: Record<string, number> = {
    z: 60, s: 61, x: 62, d: 63, c: 64, v: 65, g: 66, b: 67, h: 68, n: 69, j: 70, m: 71,
    ",": 72,
};
const UPPER_ROW: Record<string, number> = {
    q: 72, "2": 73, w: 74, "3": 75, e: 76, r: 77, "5": 78, t: 79, "6": 80, y: 81,
    "7": 82, u: 83, i: 84,
};

export class KeyboardMap {
    private octaveShift = 0;

    pitchFor(key: string): number | null {
        const k = key.toLowerCase();
        const base = LOWER_ROW[k] ?? UPPER_ROW[k];
        if (base === undefined) return null;
        const pitch = base + 12 * this.octaveShift;
        return pitch >= 0 && pitch <= 127 ? pitch : null;
    }

    // true when the key was an octave control
    handleControl(key: string): boolean {
        if (key === "[" || key === "-") {
            this.octaveShift = Math.max(this.octaveShift - 1, -4);
            return true;
        }
        if (key === "]" || key === "=") {
            this.octaveShift = Math.min(this.octaveShift + 1, 4);
            return true;
        }
        return false;
    }

    get shift(): number {
        return this.octaveShift;
    }
}
