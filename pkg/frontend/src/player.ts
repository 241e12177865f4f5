/**
 * Preview playback model: cyclic frame indexing, play/pause, and the flow
 * overlay toggle.  Rendering is delegated to a sink callback so the logic
 * stays testable without a DOM.
 */

export interface PlayerFrame {
  /** base64 PNG straight from the service */
  imageData: string;
}

export type FrameSink = (frame: PlayerFrame, index: number, overlay: boolean) => void;

export class PreviewPlayer {
  private frames: PlayerFrame[] = [];
  private index = 0;
  private playing = false;
  private overlay = false;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly sink: FrameSink,
    private readonly fps: number = 12,
    private readonly loop: boolean = true,
  ) {}

  setFrames(frames: PlayerFrame[]): void {
    this.frames = frames;
    this.index = 0;
    this.emit();
  }

  frameCount(): number {
    return this.frames.length;
  }

  currentIndex(): number {
    return this.index;
  }

  isPlaying(): boolean {
    return this.playing;
  }

  overlayEnabled(): boolean {
    return this.overlay;
  }

  toggleOverlay(): boolean {
    this.overlay = !this.overlay;
    this.emit();
    return this.overlay;
  }

  /** Next frame index under cyclic playback; clamps when looping is off. */
  nextIndex(): number {
    if (this.frames.length === 0) return 0;
    const next = this.index + 1;
    if (next < this.frames.length) return next;
    return this.loop ? next % this.frames.length : this.index;
  }

  step(): void {
    if (this.frames.length === 0) return;
    this.index = this.nextIndex();
    this.emit();
  }

  play(): void {
    if (this.playing || this.frames.length <= 1) {
      this.emit();
      return;
    }
    this.playing = true;
    this.timer = setInterval(() => this.step(), 1000 / this.fps);
  }

  pause(): void {
    this.playing = false;
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  private emit(): void {
    if (this.frames.length > 0) {
      this.sink(this.frames[this.index], this.index, this.overlay);
    }
  }
}
