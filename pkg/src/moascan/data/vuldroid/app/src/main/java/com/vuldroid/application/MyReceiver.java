package com.vuldroid.application;

import android.content.BroadcastReceiver;
import android.content.Context;
import android.content.Intent;
import android.util.Log;

/**
 * Registered in the manifest for com.vuldroid.application.EMAIL_LOADED
 * and exported without a permission.
 */
public class MyReceiver extends BroadcastReceiver {

    @Override
    public void onReceive(Context context, Intent intent) {
        String email = intent.getStringExtra("email");
        Log.d("MyReceiver", "email loaded: " + email);
        Intent relay = new Intent("com.vuldroid.application.EMAIL_RELAY");
        relay.putExtra("email", email);
        context.sendBroadcast(relay);
    }
}
