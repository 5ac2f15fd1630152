/**
 * Session controller: shows one blinded image at a time with two verdict
 * buttons and a progress indicator, and guarantees that each verdict reaches
 * the store exactly once no matter how flaky the network is.
 *
 * All authoritative state lives on the server; this controller only tracks
 * the item currently on screen and an unacknowledged verdict awaiting retry.
 */

import {
  EnrollmentError,
  NextResponse,
  ReviewItem,
  StudyApi,
  Verdict,
} from './api.js';

export interface SessionOptions {
  /** Keyboard shortcuts are off by default; misclicks are cheap, misreads are not. */
  enableKeyboard?: boolean;
  /** Delay before an automatic retry of an unacknowledged verdict. */
  retryDelayMs?: number;
}

interface PendingVerdict {
  itemId: string;
  verdict: Verdict;
  attempts: number;
}

export class SessionController {
  private current: ReviewItem | null = null;
  private pending: PendingVerdict | null = null;
  private submitting = false;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private readonly retryDelayMs: number;
  private readonly enableKeyboard: boolean;

  constructor(
    private readonly api: StudyApi,
    private readonly reviewerId: string,
    private readonly root: HTMLElement,
    options: SessionOptions = {},
  ) {
    this.retryDelayMs = options.retryDelayMs ?? 2000;
    this.enableKeyboard = options.enableKeyboard ?? false;
  }

  async start(): Promise<void> {
    this.renderLoading();
    if (this.enableKeyboard) {
      this.root.ownerDocument.addEventListener('keydown', (event) => {
        if (event.key === 'r') void this.handleVerdict('real');
        if (event.key === 'f') void this.handleVerdict('fake');
      });
    }
    await this.advance();
  }

  /** The item currently on screen, for tests and debugging. */
  get currentItem(): ReviewItem | null {
    return this.current;
  }

  private async advance(): Promise<void> {
    let next: NextResponse;
    try {
      next = await this.api.fetchNext(this.reviewerId);
    } catch (error) {
      if (error instanceof EnrollmentError) {
        this.renderEnrollmentError();
      } else {
        this.renderConnectionError(() => void this.advance());
      }
      return;
    }
    if (next.done) {
      this.current = null;
      this.renderDone(next.submitted);
      return;
    }
    this.current = next;
    this.renderItem(next);
  }

  async handleVerdict(verdict: Verdict): Promise<void> {
    if (this.submitting || this.current === null) {
      return;
    }
    this.submitting = true;
    this.setControlsEnabled(false);
    this.pending = { itemId: this.current.item_id, verdict, attempts: 0 };
    await this.flushPending();
  }

  /** Deliver the pending verdict, advancing on success or own-retry duplicate. */
  private async flushPending(): Promise<void> {
    if (this.pending === null) {
      return;
    }
    this.pending.attempts += 1;
    const { itemId, verdict, attempts } = this.pending;
    try {
      const result = await this.api.submitVerdict(this.reviewerId, itemId, verdict);
      this.pending = null;
      this.submitting = false;
      if (result === 'out-of-order' || (result === 'duplicate' && attempts === 1)) {
        // A first-attempt conflict means another window judged this item or
        // moved the session ahead; this tab's verdict was not stored.
        this.renderSessionElsewhere();
        return;
      }
      // 'stored', or a duplicate answering a retry whose first attempt
      // actually reached the store.
      await this.advance();
    } catch {
      // Network failure: the verdict stays pending and is retried; the retry
      // treats a duplicate answer as success, so the store sees it once.
      this.renderRetry();
      this.scheduleRetry();
    }
  }

  retryNow(): Promise<void> {
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
    return this.flushPending();
  }

  private scheduleRetry(): void {
    if (this.retryTimer !== null) {
      return;
    }
    this.retryTimer = setTimeout(() => {
      this.retryTimer = null;
      void this.flushPending();
    }, this.retryDelayMs);
  }

  // -- rendering ------------------------------------------------------------

  private setControlsEnabled(enabled: boolean): void {
    for (const button of this.root.querySelectorAll<HTMLButtonElement>('button[data-verdict]')) {
      button.disabled = !enabled;
    }
  }

  private renderLoading(): void {
    this.root.innerHTML = '<p class="status">Loading session…</p>';
  }

  private renderItem(item: ReviewItem): void {
    this.root.innerHTML = `
      <header class="progress">Image ${item.index} of ${item.total}</header>
      <figure class="frame">
        <img class="review-image" alt="image under review" src="${item.image_url}">
      </figure>
      <div class="controls">
        <button type="button" data-verdict="real">Real</button>
        <button type="button" data-verdict="fake">Fake</button>
      </div>
    `;
    for (const button of this.root.querySelectorAll<HTMLButtonElement>('button[data-verdict]')) {
      button.addEventListener('click', () => {
        void this.handleVerdict(button.dataset.verdict as Verdict);
      });
    }
  }

  private renderDone(submitted: number): void {
    this.root.innerHTML = `
      <div class="done">
        <h1>Session complete</h1>
        <p>You submitted ${submitted} judgments. Thank you.</p>
      </div>
    `;
  }

  private renderEnrollmentError(): void {
    this.root.innerHTML = `
      <div class="error">
        <h1>Not enrolled</h1>
        <p>This reviewer id is not part of the study roster.</p>
      </div>
    `;
  }

  private renderConnectionError(retry: () => void): void {
    this.root.innerHTML = `
      <div class="error">
        <p>The study server is unreachable.</p>
        <button type="button" class="retry">Retry</button>
      </div>
    `;
    this.root.querySelector('.retry')?.addEventListener('click', retry);
  }

  private renderRetry(): void {
    this.root.innerHTML = `
      <div class="error">
        <p>Your answer could not be delivered. It is kept and will be retried.</p>
        <button type="button" class="retry">Retry now</button>
      </div>
    `;
    this.root.querySelector('.retry')?.addEventListener('click', () => {
      void this.retryNow();
    });
  }

  private renderSessionElsewhere(): void {
    this.root.innerHTML = `
      <div class="error">
        <h1>Session open elsewhere</h1>
        <p>This session is being reviewed in another window.</p>
      </div>
    `;
  }
}
